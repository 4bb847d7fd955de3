//! Log-prior terms that discourage fast latent motion.
//!
//! * distance variant: Gaussian random walk on the knot positions, with an
//!   isotropic Gaussian on the first knot;
//! * projection variant: truncated normal on `[0, 1]` for the cosine of the
//!   angle swept by each node between consecutive knots.
//!
//! Both increment variances scale with the segment length. Additive
//! constants are dropped for the random walk and kept for the truncated
//! normal.

use serde::{Deserialize, Serialize};

use crate::error::{ClpmError, Result};
use crate::normal::truncated_normal_ln_pdf;
use crate::projection::dot;
use crate::trajectories::{ChangePointGrid, TrajectorySet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    /// Variance of the first knot position (distance variant).
    pub sigma0_sq: f64,
    /// Increment variance per unit time (both variants).
    pub sigma_sq: f64,
    /// Mean of the truncated normal on the angular cosine (projection).
    pub mu_angle: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            sigma0_sq: 1.0,
            sigma_sq: 0.1,
            mu_angle: 1.0,
        }
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma0_sq", self.sigma0_sq), ("sigma_sq", self.sigma_sq)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ClpmError::Domain(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.mu_angle) {
            return Err(ClpmError::Domain(format!(
                "mu_angle must lie in [0, 1], got {}",
                self.mu_angle
            )));
        }
        Ok(())
    }
}

pub(crate) fn distance_node(traj: &TrajectorySet, grid: &ChangePointGrid, params: &PenaltyParams, i: usize) -> f64 {
    let z0 = traj.knot(i, 0);
    let mut total = -dot(z0, z0) / (2.0 * params.sigma0_sq);
    for k in 1..traj.num_knots() {
        let (prev, cur) = (traj.knot(i, k - 1), traj.knot(i, k));
        let step: f64 = cur.iter().zip(prev).map(|(c, p)| (c - p) * (c - p)).sum();
        total -= step / (2.0 * grid.segment_len(k - 1) * params.sigma_sq);
    }
    total
}

pub(crate) fn distance_node_grad(
    traj: &TrajectorySet,
    grid: &ChangePointGrid,
    params: &PenaltyParams,
    i: usize,
    weight: f64,
    grad: &mut [f64],
) {
    let d = traj.dim();
    let data = traj.as_slice();
    let o0 = traj.offset(i, 0);
    for c in 0..d {
        grad[o0 + c] -= weight * data[o0 + c] / params.sigma0_sq;
    }
    for k in 1..traj.num_knots() {
        let coef = weight / (grid.segment_len(k - 1) * params.sigma_sq);
        let (op, oc) = (traj.offset(i, k - 1), traj.offset(i, k));
        for c in 0..d {
            let diff = data[oc + c] - data[op + c];
            grad[oc + c] -= coef * diff;
            grad[op + c] += coef * diff;
        }
    }
}

/// Gaussian random-walk log-penalty summed over nodes, constants dropped.
pub fn penalty_distance(traj: &TrajectorySet, grid: &ChangePointGrid, params: &PenaltyParams) -> Result<f64> {
    params.validate()?;
    traj.check_grid(grid)?;
    Ok((0..traj.num_nodes())
        .map(|i| distance_node(traj, grid, params, i))
        .sum())
}

fn cosine(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let nx = dot(x, x).sqrt();
    let ny = dot(y, y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(ClpmError::Domain(
            "angular penalty is undefined for a zero-norm knot position".into(),
        ));
    }
    Ok((dot(x, y) / (nx * ny), nx, ny))
}

pub(crate) fn projection_node(
    traj: &TrajectorySet,
    grid: &ChangePointGrid,
    params: &PenaltyParams,
    i: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..grid.num_segments() {
        let (c, _, _) = cosine(traj.knot(i, k + 1), traj.knot(i, k))?;
        let var = grid.segment_len(k) * params.sigma_sq;
        let term = truncated_normal_ln_pdf(c, params.mu_angle, var, 0.0, 1.0);
        if !term.is_finite() {
            return Err(ClpmError::Domain(format!(
                "cosine {c} of node {i} across knot {k} lies outside [0, 1]"
            )));
        }
        total += term;
    }
    Ok(total)
}

pub(crate) fn projection_node_grad(
    traj: &TrajectorySet,
    grid: &ChangePointGrid,
    params: &PenaltyParams,
    i: usize,
    weight: f64,
    grad: &mut [f64],
) -> Result<()> {
    let d = traj.dim();
    for k in 0..grid.num_segments() {
        let (x, y) = (traj.knot(i, k + 1), traj.knot(i, k));
        let (c, nx, ny) = cosine(x, y)?;
        let var = grid.segment_len(k) * params.sigma_sq;
        let dterm = -weight * (c - params.mu_angle) / var;
        let (ox, oy) = (traj.offset(i, k + 1), traj.offset(i, k));
        for m in 0..d {
            // ∂c/∂x = y/(|x||y|) − c·x/|x|², and symmetrically for y
            let dx = y[m] / (nx * ny) - c * x[m] / (nx * nx);
            let dy = x[m] / (nx * ny) - c * y[m] / (ny * ny);
            grad[ox + m] += dterm * dx;
            grad[oy + m] += dterm * dy;
        }
    }
    Ok(())
}

/// Truncated-normal angular log-penalty summed over nodes, normalizing
/// constants included.
pub fn penalty_projection(traj: &TrajectorySet, grid: &ChangePointGrid, params: &PenaltyParams) -> Result<f64> {
    params.validate()?;
    traj.check_grid(grid)?;
    let mut total = 0.0;
    for i in 0..traj.num_nodes() {
        total += projection_node(traj, grid, params, i)?;
    }
    Ok(total)
}
