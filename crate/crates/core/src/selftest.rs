//! Oracle suite run by the `selftest` subcommand: closed-form integrals
//! against quadrature, analytic gradients against finite differences and
//! the minibatch unbiasedness identity, on seeded random instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distance::distance_integral;
use crate::error::Result;
use crate::optimizer::Problem;
use crate::oracle::{finite_difference_check, quadrature_integral, random_instance, unbiasedness_discrepancy};
use crate::penalties::PenaltyParams;
use crate::projection::projection_integral;
use crate::trajectories::Variant;

pub const INTEGRAL_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const UNBIASEDNESS_TOL: f64 = 1e-10;
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// Worst relative discrepancy between the closed-form dyad integrals and
/// adaptive quadrature over `instances` random models.
pub fn integral_check(variant: Variant, instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, variant, 5, 6);
        let n = inst.state.num_nodes();
        for i in 0..n {
            for j in (i + 1)..n {
                let closed = match variant {
                    Variant::Distance => distance_integral(&inst.state, &inst.grid, i, j)?,
                    Variant::Projection => projection_integral(&inst.state, &inst.grid, i, j)?,
                };
                let reference = quadrature_integral(&inst.state, &inst.grid, i, j);
                let err = (closed - reference).abs() / reference.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(err);
            }
        }
    }
    Ok(CheckOutcome {
        name: format!("{variant} integrals vs quadrature"),
        instances,
        worst,
        tolerance: INTEGRAL_TOL,
    })
}

/// Worst finite-difference discrepancy of the full gradient.
pub fn gradient_check(variant: Variant, instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, variant, 5, 6);
        let problem = Problem::new(variant, inst.grid.clone(), &inst.events, PenaltyParams::default())?;
        worst = worst.max(finite_difference_check(&problem, &inst.state, FD_STEP)?.max_rel_error);
    }
    Ok(CheckOutcome {
        name: format!("{variant} gradient vs finite differences"),
        instances,
        worst,
        tolerance: GRADIENT_TOL,
    })
}

/// Worst discrepancy between the averaged single-node estimates and the
/// full gradient.
pub fn unbiasedness_check(variant: Variant, instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, variant, 5, 6);
        let problem = Problem::new(variant, inst.grid.clone(), &inst.events, PenaltyParams::default())?;
        worst = worst.max(unbiasedness_discrepancy(&problem, &inst.state)?);
    }
    Ok(CheckOutcome {
        name: format!("{variant} minibatch unbiasedness"),
        instances,
        worst,
        tolerance: UNBIASEDNESS_TOL,
    })
}

/// The full suite with the given instance counts.
pub fn run_suite(integral_instances: usize, gradient_instances: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (k, variant) in [Variant::Projection, Variant::Distance].into_iter().enumerate() {
        let s = seed.wrapping_add(k as u64 * 1000);
        out.push(integral_check(variant, integral_instances, s)?);
        out.push(gradient_check(variant, gradient_instances, s + 1)?);
        out.push(unbiasedness_check(variant, gradient_instances, s + 2)?);
    }
    Ok(out)
}
