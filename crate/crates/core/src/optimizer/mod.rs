//! Penalized maximum-likelihood fitting.

pub mod fit;
pub mod objective;
pub mod params;

pub use fit::{
    fit, fit_from, fit_with_dim, initial_state, BatchMode, FitResult, OptimizerConfig, StepRule, TracePoint,
};
pub use objective::{
    gradient, minibatch_gradient_estimate, node_term, objective, Gradient, NodeObjectiveTerm, ObjectiveParts, Problem,
};
pub use params::{softplus, softplus_inv, Shape};
