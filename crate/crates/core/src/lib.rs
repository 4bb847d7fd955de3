//! Continuous latent position models for instantaneous interaction data.
//!
//! Nodes follow piecewise-linear trajectories in a low-dimensional latent
//! space and every dyad interacts as an inhomogeneous Poisson process whose
//! rate depends on the two current positions: the dot product (projection
//! variant) or `exp(β − ‖z_i − z_j‖²)` (distance variant). Both rates have
//! closed-form integrals over each linear segment, which makes the
//! penalized log-likelihood and its gradient exact.

pub mod distance;
pub mod error;
pub mod generators;
pub mod io;
pub mod normal;
pub mod optimizer;
pub mod oracle;
pub mod penalties;
pub mod projection;
pub mod recovery;
pub mod selftest;
pub mod trajectories;

pub use distance::{distance_integral, distance_loglik, distance_rate, segment_params, SegmentShape};
pub use error::{ClpmError, Result};
pub use generators::{
    make_ring_trajectories, make_sim1_schedule, make_sim2_schedule, simulate_blockmodel, simulate_clpm, BlockSchedule,
    ScenarioSpec,
};
pub use optimizer::{
    fit, fit_from, gradient, minibatch_gradient_estimate, node_term, objective, BatchMode, FitResult, OptimizerConfig,
    Problem, StepRule,
};
pub use penalties::{penalty_distance, penalty_projection, PenaltyParams};
pub use projection::{projection_integral, projection_loglik, projection_rate};
pub use trajectories::{interpolate, ChangePointGrid, Event, EventList, ModelState, TrajectorySet, Variant};
