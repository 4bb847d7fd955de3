//! Distance variant: `log λ_ij(t) = β − ‖z_i(t) − z_j(t)‖²`.
//!
//! Inside a segment the relative position is `a + t·b` with `a` the offset
//! at the segment start and `b` the relative displacement, so the exponent
//! is a concave quadratic in the local coordinate. Completing the square
//! turns the segment integral into a Gaussian mass on `[0, 1]`.

use std::f64::consts::SQRT_2;

use crate::error::{ClpmError, Result};
use crate::normal::{gl16, gl5, normal_cdf_diff};
use crate::projection::dot;
use crate::trajectories::{ChangePointGrid, EventList, ModelState, TrajectorySet, Variant};

/// Below this squared relative displacement the segment integral is
/// evaluated by 5-point Gauss–Legendre instead of the closed form.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Below this squared relative displacement the first and second moments
/// used by the gradient are integrated numerically; the closed forms
/// cancel badly when the Gaussian width blows up.
pub(crate) const MOMENT_THRESHOLD: f64 = 1e-2;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Completed-square form of one dyad-segment exponent:
/// `−‖a + t·b‖² = −(t − mu)²/(2·sigma²) − offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentGaussianParams {
    pub mu: f64,
    pub sigma: f64,
    pub offset: f64,
    pub delta_norm_sq: f64,
}

/// Result of [`segment_params`]: either a proper Gaussian shape, or the
/// degenerate branch where the two nodes move (almost) in parallel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SegmentShape {
    Gaussian(SegmentGaussianParams),
    Degenerate { start_dist_sq: f64, delta_norm_sq: f64 },
}

impl SegmentGaussianParams {
    /// Reconstructed exponent at local coordinate `t`.
    pub fn exponent(&self, t: f64) -> f64 {
        let z = t - self.mu;
        -z * z / (2.0 * self.sigma * self.sigma) - self.offset
    }
}

fn complete_square(a: &[f64], b: &[f64]) -> SegmentShape {
    let bb = dot(b, b);
    if bb < DEGENERACY_THRESHOLD {
        return SegmentShape::Degenerate {
            start_dist_sq: dot(a, a),
            delta_norm_sq: bb,
        };
    }
    // mu = ⟨b/‖b‖, (z_j − z_i)/‖b‖⟩ with a = z_i − z_j
    let mu = -dot(a, b) / bb;
    let offset: f64 = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| {
            let r = ai + mu * bi;
            r * r
        })
        .sum();
    SegmentShape::Gaussian(SegmentGaussianParams {
        mu,
        sigma: 1.0 / (SQRT_2 * bb.sqrt()),
        offset,
        delta_norm_sq: bb,
    })
}

/// `∫_0^1 exp(β − ‖(1 − t)·a + t·c‖²) dt` for the relative positions `a`
/// and `c` at the two ends of a segment.
pub(crate) fn unit_segment_integral(a: &[f64], c: &[f64], beta: f64) -> f64 {
    let d = a.len();
    let mut b = [0.0f64; 8];
    let mut bv;
    let b: &mut [f64] = if d <= 8 {
        &mut b[..d]
    } else {
        bv = vec![0.0; d];
        &mut bv
    };
    for k in 0..d {
        b[k] = c[k] - a[k];
    }
    match complete_square(a, b) {
        SegmentShape::Gaussian(p) => {
            SQRT_2PI * p.sigma * (beta - p.offset).exp() * normal_cdf_diff((1.0 - p.mu) / p.sigma, -p.mu / p.sigma)
        }
        SegmentShape::Degenerate { .. } => {
            let (nodes, weights) = gl5();
            nodes
                .iter()
                .zip(weights)
                .map(|(&t, &w)| w * (beta - sq_dist_along(a, b, t)).exp())
                .sum()
        }
    }
}

#[inline]
fn sq_dist_along(a: &[f64], b: &[f64], t: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ai, bi)| {
            let r = ai + t * bi;
            r * r
        })
        .sum()
}

/// Moments `∫_0^1 t^k exp(β − ‖a + t·b‖²) dt` for `k = 0, 1, 2`, with
/// `b = c − a`.
pub(crate) fn unit_segment_moments(a: &[f64], b: &[f64], beta: f64) -> [f64; 3] {
    let bb = dot(b, b);
    if bb < MOMENT_THRESHOLD {
        let (nodes, weights) = gl16();
        let mut m = [0.0; 3];
        for (&t, &w) in nodes.iter().zip(weights) {
            let f = w * (beta - sq_dist_along(a, b, t)).exp();
            m[0] += f;
            m[1] += t * f;
            m[2] += t * t * f;
        }
        return m;
    }
    let mu = -dot(a, b) / bb;
    let var = 0.5 / bb;
    let sigma = var.sqrt();
    let offset = sq_dist_along(a, b, mu);
    let j0 = SQRT_2PI * sigma * (beta - offset).exp() * normal_cdf_diff((1.0 - mu) / sigma, -mu / sigma);
    let f0 = (beta - dot(a, a)).exp();
    let f1 = (beta - sq_dist_along(a, b, 1.0)).exp();
    let j1 = mu * j0 + var * (f0 - f1);
    let j2 = (var + mu * mu) * j0 + var * (mu * f0 - (1.0 + mu) * f1);
    [j0, j1, j2]
}

/// `λ_ij(t) = exp(β − ‖z_i(t) − z_j(t)‖²)`.
pub fn distance_rate(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize, t: f64) -> Result<f64> {
    state.expect_variant(Variant::Distance)?;
    let traj = state.trajectories();
    traj.check_grid(grid)?;
    let g = grid.locate_segment(t)?;
    let u = grid.local_coordinate(g, t);
    let mut zi = vec![0.0; traj.dim()];
    let mut zj = vec![0.0; traj.dim()];
    traj.position_in_segment(i, g, u, &mut zi);
    traj.position_in_segment(j, g, u, &mut zj);
    let d2: f64 = zi.iter().zip(&zj).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((state.beta() - d2).exp())
}

fn relative_knot(traj: &TrajectorySet, i: usize, j: usize, g: usize) -> Vec<f64> {
    traj.knot(i, g)
        .iter()
        .zip(traj.knot(j, g))
        .map(|(x, y)| x - y)
        .collect()
}

/// Completed-square parameters of dyad `(i, j)` on segment `g`.
pub fn segment_params(
    state: &ModelState,
    grid: &ChangePointGrid,
    i: usize,
    j: usize,
    g: usize,
) -> Result<SegmentShape> {
    state.expect_variant(Variant::Distance)?;
    let traj = state.trajectories();
    traj.check_grid(grid)?;
    if g >= grid.num_segments() {
        return Err(ClpmError::Domain(format!(
            "segment {g} out of range ({} segments)",
            grid.num_segments()
        )));
    }
    let a = relative_knot(traj, i, j, g);
    let c = relative_knot(traj, i, j, g + 1);
    let b: Vec<f64> = c.iter().zip(&a).map(|(c, a)| c - a).collect();
    Ok(complete_square(&a, &b))
}

pub(crate) fn dyad_integral(traj: &TrajectorySet, grid: &ChangePointGrid, beta: f64, i: usize, j: usize) -> f64 {
    let d = traj.dim();
    let mut a = vec![0.0; d];
    let mut c = vec![0.0; d];
    let mut total = 0.0;
    for ((ck, zi), zj) in c.iter_mut().zip(traj.knot(i, 0)).zip(traj.knot(j, 0)) {
        *ck = zi - zj;
    }
    for g in 0..grid.num_segments() {
        std::mem::swap(&mut a, &mut c);
        let (zi, zj) = (traj.knot(i, g + 1), traj.knot(j, g + 1));
        for k in 0..d {
            c[k] = zi[k] - zj[k];
        }
        total += grid.segment_len(g) * unit_segment_integral(&a, &c, beta);
    }
    total
}

/// `∫_0^T exp(β − ‖z_i(s) − z_j(s)‖²) ds`, exact up to rounding.
pub fn distance_integral(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize) -> Result<f64> {
    state.expect_variant(Variant::Distance)?;
    state.trajectories().check_grid(grid)?;
    Ok(dyad_integral(state.trajectories(), grid, state.beta(), i, j))
}

/// `Σ_{i<j} [Σ_e (β − ‖z_i(τ_e) − z_j(τ_e)‖²) − ∫ λ_ij]`, each unordered
/// dyad counted once.
pub fn distance_loglik(state: &ModelState, grid: &ChangePointGrid, events: &EventList) -> Result<f64> {
    state.expect_variant(Variant::Distance)?;
    let traj = state.trajectories();
    traj.check_grid(grid)?;
    let n = traj.num_nodes();
    if events.num_nodes() > n {
        return Err(ClpmError::Domain(format!(
            "event list has {} nodes but the state only {n}",
            events.num_nodes()
        )));
    }
    let beta = state.beta();
    let d = traj.dim();
    let mut zi = vec![0.0; d];
    let mut zj = vec![0.0; d];
    let mut event_term = 0.0;
    for e in events.iter() {
        let g = grid.locate_segment(e.time)?;
        let u = grid.local_coordinate(g, e.time);
        traj.position_in_segment(e.a, g, u, &mut zi);
        traj.position_in_segment(e.b, g, u, &mut zj);
        let d2: f64 = zi.iter().zip(&zj).map(|(x, y)| (x - y) * (x - y)).sum();
        event_term += beta - d2;
    }
    let mut integral = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            integral += dyad_integral(traj, grid, beta, i, j);
        }
    }
    Ok(event_term - integral)
}
