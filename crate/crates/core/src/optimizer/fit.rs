//! Gradient-ascent fitting loop.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ClpmError, Result};
use crate::optimizer::objective::Problem;
use crate::optimizer::params::{softplus_inv, Shape};
use crate::penalties::PenaltyParams;
use crate::trajectories::{ChangePointGrid, EventList, ModelState, TrajectorySet, Variant};

/// Standard deviation of the random initial knot coordinates.
pub const INIT_SPREAD: f64 = 0.1;

/// Length of the window used by the relative-improvement stopping rule.
pub const CONVERGENCE_WINDOW: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    FullBatch,
    Minibatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum StepRule {
    Fixed {
        step: f64,
    },
    /// Per-parameter moment-based step (first and second moment estimates
    /// with bias correction).
    AdaptiveMoments {
        step: f64,
        decay1: f64,
        decay2: f64,
        eps: f64,
    },
}

impl StepRule {
    pub fn adaptive(step: f64) -> Self {
        StepRule::AdaptiveMoments {
            step,
            decay1: 0.9,
            decay2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for StepRule {
    fn default() -> Self {
        Self::adaptive(0.01)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub mode: BatchMode,
    /// Nodes per minibatch; `None` picks `max(1, N/10)`.
    pub batch_size: Option<usize>,
    pub step_rule: StepRule,
    pub max_iters: usize,
    pub seed: u64,
    /// Run a finite-difference check of the gradient at the starting point.
    pub grad_check: bool,
    /// Relative objective improvement over [`CONVERGENCE_WINDOW`]
    /// evaluations below which fitting stops; zero disables the rule.
    pub convergence_tol: f64,
    /// Iterations between full-objective evaluations in minibatch mode.
    pub eval_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mode: BatchMode::FullBatch,
            batch_size: None,
            step_rule: StepRule::default(),
            max_iters: 2000,
            seed: 0,
            grad_check: false,
            convergence_tol: 1e-7,
            eval_every: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.max_iters == 0 {
            return Err(ClpmError::Domain("max_iters must be at least 1".into()));
        }
        if let Some(b) = self.batch_size {
            if b == 0 || b > num_nodes {
                return Err(ClpmError::Domain(format!(
                    "batch size must lie in [1, {num_nodes}], got {b}"
                )));
            }
        }
        let step = match self.step_rule {
            StepRule::Fixed { step } => step,
            StepRule::AdaptiveMoments { step, .. } => step,
        };
        if !(step.is_finite() && step > 0.0) {
            return Err(ClpmError::Domain(format!("step must be positive, got {step}")));
        }
        if self.eval_every == 0 {
            return Err(ClpmError::Domain("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_batch_size(&self, num_nodes: usize) -> usize {
        self.batch_size.unwrap_or((num_nodes / 10).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Best iterate seen among the evaluated ones.
    pub state: ModelState,
    pub best_objective: f64,
    pub trace: Vec<TracePoint>,
    pub iterations: usize,
    pub converged: bool,
    /// Max relative finite-difference discrepancy at the starting point,
    /// when requested.
    pub grad_check: Option<f64>,
}

/// Random starting state: knot coordinates i.i.d. centered Gaussian with
/// standard deviation [`INIT_SPREAD`]; the distance intercept is set to the
/// homogeneous-rate estimate. Projection states are perturbed in the
/// unconstrained space around the point whose dot products match that
/// estimate.
pub fn initial_state(
    variant: Variant,
    num_nodes: usize,
    grid: &ChangePointGrid,
    num_events: usize,
    dim: usize,
    seed: u64,
) -> Result<ModelState> {
    if num_nodes < 2 {
        return Err(ClpmError::Domain(format!(
            "fitting needs at least two nodes, got {num_nodes}"
        )));
    }
    let pairs = (num_nodes * (num_nodes - 1) / 2) as f64;
    let rate = (num_events.max(1) as f64) / (grid.horizon() * pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, INIT_SPREAD).expect("valid spread");
    let len = num_nodes * grid.num_knots() * dim;
    match variant {
        Variant::Distance => {
            let data: Vec<f64> = (0..len).map(|_| noise.sample(&mut rng)).collect();
            let traj = TrajectorySet::new(num_nodes, grid.num_knots(), dim, data)?;
            ModelState::distance(traj, rate.ln())
        }
        Variant::Projection => {
            let center = softplus_inv((rate / dim as f64).sqrt());
            let w: Vec<f64> = (0..len).map(|_| center + noise.sample(&mut rng)).collect();
            Shape {
                variant,
                num_nodes,
                num_knots: grid.num_knots(),
                dim,
            }
            .from_vector(&w)
        }
    }
}

/// Fits a fresh model to `events`.
pub fn fit(
    events: &EventList,
    grid: &ChangePointGrid,
    variant: Variant,
    penalty: &PenaltyParams,
    config: &OptimizerConfig,
) -> Result<FitResult> {
    fit_with_dim(events, grid, variant, penalty, config, 2)
}

pub fn fit_with_dim(
    events: &EventList,
    grid: &ChangePointGrid,
    variant: Variant,
    penalty: &PenaltyParams,
    config: &OptimizerConfig,
    dim: usize,
) -> Result<FitResult> {
    let problem = Problem::new(variant, grid.clone(), events, *penalty)?;
    let init = initial_state(variant, events.num_nodes(), grid, events.len(), dim, config.seed)?;
    fit_from(&problem, init, config)
}

struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    t: i32,
}

fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|x| !x.is_finite())
}

/// Runs gradient ascent from `init`.
pub fn fit_from(problem: &Problem, init: ModelState, config: &OptimizerConfig) -> Result<FitResult> {
    let n = problem.num_nodes();
    config.validate(n)?;
    let shape = Shape::of(&init);
    let mut params = shape.to_vector(&init);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let nodes: Vec<usize> = (0..n).collect();
    let batch_size = config.effective_batch_size(n);

    let grad_check = if config.grad_check {
        let report = crate::oracle::finite_difference_check(problem, &init, 1e-5)?;
        if report.max_rel_error > 1e-5 {
            log::warn!(
                "gradient check discrepancy {:.3e} at {}",
                report.max_rel_error,
                shape.block_name(report.worst_index)
            );
        }
        Some(report.max_rel_error)
    } else {
        None
    };

    let mut moments = Moments {
        first: vec![0.0; params.len()],
        second: vec![0.0; params.len()],
        t: 0,
    };
    let mut trace = Vec::new();
    let mut best: Option<(f64, ModelState)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..config.max_iters {
        let state = shape.from_vector(&params).map_err(|_| ClpmError::NonFinite {
            iteration: iter,
            block: first_non_finite(&params).map_or("parameters".into(), |k| shape.block_name(k)),
        })?;

        let evaluate = config.mode == BatchMode::FullBatch || iter % config.eval_every == 0;
        if evaluate {
            let value = problem.objective(&state)?;
            if !value.is_finite() {
                return Err(ClpmError::NonFinite {
                    iteration: iter,
                    block: "objective".into(),
                });
            }
            trace.push(TracePoint {
                iteration: iter,
                objective: value,
            });
            if iter % 100 == 0 {
                log::info!("iteration {iter}: objective {value:.6}");
            }
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, state.clone()));
            }
            if config.convergence_tol > 0.0 && trace.len() > CONVERGENCE_WINDOW {
                let old = trace[trace.len() - 1 - CONVERGENCE_WINDOW].objective;
                let rel = (value - old).abs() / old.abs().max(f64::MIN_POSITIVE);
                if rel < config.convergence_tol {
                    converged = true;
                    iterations = iter;
                    break;
                }
            }
        }

        let grad = match config.mode {
            BatchMode::FullBatch => problem.gradient(&state)?,
            BatchMode::Minibatch => {
                let batch: Vec<usize> = (0..batch_size)
                    .map(|_| *nodes.choose(&mut rng).expect("at least two nodes"))
                    .collect();
                problem.minibatch_gradient(&state, &batch)?
            }
        };
        let g = shape.gradient_vector(&grad);
        if let Some(k) = first_non_finite(&g) {
            return Err(ClpmError::NonFinite {
                iteration: iter,
                block: shape.block_name(k),
            });
        }
        step(&mut params, &g, &config.step_rule, &mut moments);
        iterations = iter + 1;
    }

    if !converged {
        // evaluate the final iterate too
        let state = shape.from_vector(&params)?;
        let value = problem.objective(&state)?;
        if value.is_finite() {
            trace.push(TracePoint {
                iteration: iterations,
                objective: value,
            });
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, state));
            }
        }
    }

    let (best_objective, state) = best.expect("at least one evaluation");
    Ok(FitResult {
        state,
        best_objective,
        trace,
        iterations,
        converged,
        grad_check,
    })
}

fn step(params: &mut [f64], grad: &[f64], rule: &StepRule, m: &mut Moments) {
    match *rule {
        StepRule::Fixed { step } => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p += step * g;
            }
        }
        StepRule::AdaptiveMoments {
            step,
            decay1,
            decay2,
            eps,
        } => {
            m.t += 1;
            let c1 = 1.0 - decay1.powi(m.t);
            let c2 = 1.0 - decay2.powi(m.t);
            for k in 0..params.len() {
                let g = grad[k];
                m.first[k] = decay1 * m.first[k] + (1.0 - decay1) * g;
                m.second[k] = decay2 * m.second[k] + (1.0 - decay2) * g * g;
                let mhat = m.first[k] / c1;
                let vhat = m.second[k] / c2;
                params[k] += step * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
