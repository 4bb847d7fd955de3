//! Flat parameter vectors used by the optimizer.
//!
//! Distance states map to `[β, z…]`. Projection states map to the
//! unconstrained `w…` with `z = softplus(w)`, which keeps every coordinate
//! strictly positive.

use crate::error::Result;
use crate::optimizer::objective::Gradient;
use crate::trajectories::{ModelState, TrajectorySet, Variant};

#[inline]
pub fn softplus(w: f64) -> f64 {
    if w > 30.0 {
        w + (-w).exp().ln_1p()
    } else {
        w.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `z > 0`.
#[inline]
pub fn softplus_inv(z: f64) -> f64 {
    if z > 30.0 {
        z + (-(-z).exp()).ln_1p()
    } else {
        z.exp_m1().ln()
    }
}

/// Shape of a trajectory set, needed to rebuild states from flat vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub variant: Variant,
    pub num_nodes: usize,
    pub num_knots: usize,
    pub dim: usize,
}

impl Shape {
    pub fn of(state: &ModelState) -> Self {
        let t = state.trajectories();
        Shape {
            variant: state.variant(),
            num_nodes: t.num_nodes(),
            num_knots: t.num_knots(),
            dim: t.dim(),
        }
    }

    fn beta_slots(&self) -> usize {
        match self.variant {
            Variant::Distance => 1,
            Variant::Projection => 0,
        }
    }

    pub fn len(&self) -> usize {
        self.beta_slots() + self.num_nodes * self.num_knots * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vector(&self, state: &ModelState) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        let z = state.trajectories().as_slice();
        match self.variant {
            Variant::Distance => {
                v.push(state.beta());
                v.extend_from_slice(z);
            }
            Variant::Projection => v.extend(z.iter().map(|&x| softplus_inv(x))),
        }
        v
    }

    pub fn from_vector(&self, v: &[f64]) -> Result<ModelState> {
        let b = self.beta_slots();
        let data: Vec<f64> = match self.variant {
            Variant::Distance => v[b..].to_vec(),
            Variant::Projection => v.iter().map(|&w| softplus(w)).collect(),
        };
        let traj = TrajectorySet::new(self.num_nodes, self.num_knots, self.dim, data)?;
        let beta = if b == 1 { v[0] } else { 0.0 };
        ModelState::new(self.variant, traj, beta)
    }

    pub fn gradient_vector(&self, grad: &Gradient) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        if self.variant == Variant::Distance {
            v.push(grad.beta);
        }
        v.extend_from_slice(&grad.positions);
        v
    }

    /// Human-readable name of the parameter block holding flat index `k`.
    pub fn block_name(&self, k: usize) -> String {
        let b = self.beta_slots();
        if k < b {
            return "beta".into();
        }
        let per_node = self.num_knots * self.dim;
        let node = (k - b) / per_node;
        let knot = ((k - b) % per_node) / self.dim;
        format!("positions of node {node} (knot {knot})")
    }
}
