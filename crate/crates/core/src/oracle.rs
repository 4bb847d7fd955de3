//! Independent reference computations used to check the closed forms and
//! the analytic gradients: adaptive quadrature of the rate functions,
//! direct evaluation of the log-likelihood, central finite differences and
//! random small instances.
//!
//! Nothing here goes through the closed-form integrals or the analytic
//! gradient code.

use rand::Rng;

use crate::error::Result;
use crate::normal::{normal_cdf, truncated_normal_ln_pdf};
use crate::optimizer::{Problem, Shape};
use crate::penalties::PenaltyParams;
use crate::trajectories::{interpolate, ChangePointGrid, Event, EventList, ModelState, TrajectorySet, Variant};

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS7_WEIGHTS[3];
    for k in 0..7 {
        let dx = half * GK_NODES[k];
        let (f1, f2) = (f(center - dx), f(center + dx));
        kronrod += GK_WEIGHTS[k] * (f1 + f2);
        if k % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[k / 2] * (f1 + f2);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature of `f` on `[a, b]`,
/// bisecting the interval with the largest error estimate until the total
/// estimate falls below `rel_tol · |I|` (or `1e-300`).
pub fn adaptive_quadrature<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut intervals = vec![{
        let (v, e) = gauss_kronrod_15(&f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..5000 {
        let total: f64 = intervals.iter().map(|x| x.2).sum();
        let err: f64 = intervals.iter().map(|x| x.3).sum();
        if err <= (rel_tol * total.abs()).max(1e-300) {
            break;
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(k, _)| k)
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod_15(&f, lo, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    intervals.iter().map(|x| x.2).sum()
}

/// Rate of dyad `(i, j)` at time `t`, computed from interpolated positions.
pub fn direct_rate(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize, t: f64) -> f64 {
    let zi = interpolate(state.trajectories(), grid, i, t).expect("t within grid");
    let zj = interpolate(state.trajectories(), grid, j, t).expect("t within grid");
    match state.variant() {
        Variant::Projection => zi.iter().zip(&zj).map(|(a, b)| a * b).sum(),
        Variant::Distance => {
            let d2: f64 = zi.iter().zip(&zj).map(|(a, b)| (a - b) * (a - b)).sum();
            (state.beta() - d2).exp()
        }
    }
}

/// `∫_0^T λ_ij(t) dt` by adaptive quadrature, one integration per segment
/// (the integrand is only piecewise smooth).
pub fn quadrature_integral(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize) -> f64 {
    grid.knots()
        .windows(2)
        .map(|w| adaptive_quadrature(|t| direct_rate(state, grid, i, j, t), w[0], w[1], 1e-13))
        .sum()
}

/// Log-likelihood from its definition: logs of directly evaluated rates
/// minus quadrature integrals.
pub fn direct_loglik(state: &ModelState, grid: &ChangePointGrid, events: &EventList) -> f64 {
    let n = state.num_nodes();
    let mut total: f64 = events
        .iter()
        .map(|e| direct_rate(state, grid, e.a, e.b, e.time).ln())
        .sum();
    for i in 0..n {
        for j in (i + 1)..n {
            total -= quadrature_integral(state, grid, i, j);
        }
    }
    total
}

/// Penalty by straightforward loops over nodes and knots.
pub fn naive_penalty(state: &ModelState, grid: &ChangePointGrid, params: &PenaltyParams) -> f64 {
    let traj = state.trajectories();
    let knots = grid.knots();
    let mut total = 0.0;
    for i in 0..traj.num_nodes() {
        match state.variant() {
            Variant::Distance => {
                let z0 = traj.knot(i, 0);
                total -= z0.iter().map(|x| x * x).sum::<f64>() / (2.0 * params.sigma0_sq);
                for k in 1..knots.len() {
                    let step: f64 = traj
                        .knot(i, k)
                        .iter()
                        .zip(traj.knot(i, k - 1))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    total -= step / (2.0 * (knots[k] - knots[k - 1]) * params.sigma_sq);
                }
            }
            Variant::Projection => {
                for k in 0..knots.len() - 1 {
                    let (x, y) = (traj.knot(i, k + 1), traj.knot(i, k));
                    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let c = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny);
                    let var = (knots[k + 1] - knots[k]) * params.sigma_sq;
                    total += truncated_normal_ln_pdf(c, params.mu_angle, var, 0.0, 1.0);
                }
            }
        }
    }
    total
}

/// Penalized objective from [`direct_loglik`] and [`naive_penalty`].
pub fn direct_objective(state: &ModelState, grid: &ChangePointGrid, events: &EventList, params: &PenaltyParams) -> f64 {
    direct_loglik(state, grid, events) + naive_penalty(state, grid, params)
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `max_k |a_k − n_k| / max(|a_k|, |n_k|, 1)`.
    pub max_rel_error: f64,
    pub worst_index: usize,
}

/// Relative discrepancy used for gradient comparisons; the unit floor keeps
/// near-zero components from dominating.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compares [`Problem::gradient`] against central finite differences of
/// [`Problem::objective`] in the optimizer's parameterization.
pub fn finite_difference_check(problem: &Problem, state: &ModelState, h: f64) -> Result<FdReport> {
    let shape = Shape::of(state);
    let analytic = shape.gradient_vector(&problem.gradient(state)?);
    let base = shape.to_vector(state);
    let mut numeric = Vec::with_capacity(base.len());
    let mut work = base.clone();
    for k in 0..base.len() {
        work[k] = base[k] + h;
        let up = problem.objective(&shape.from_vector(&work)?)?;
        work[k] = base[k] - h;
        let down = problem.objective(&shape.from_vector(&work)?)?;
        work[k] = base[k];
        numeric.push((up - down) / (2.0 * h));
    }
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| rel_error(*a, *n))
        .enumerate()
        .fold((0, 0.0), |acc, (k, e)| if e > acc.1 { (k, e) } else { acc });
    Ok(FdReport {
        analytic,
        numeric,
        max_rel_error,
        worst_index,
    })
}

/// `‖(1/n) Σ_i n∇ψ_i − ∇objective‖_∞ / ‖∇objective‖_∞`.
pub fn unbiasedness_discrepancy(problem: &Problem, state: &ModelState) -> Result<f64> {
    let shape = Shape::of(state);
    let full = shape.gradient_vector(&problem.gradient(state)?);
    let n = problem.num_nodes();
    let mut mean = vec![0.0; full.len()];
    for i in 0..n {
        let single = shape.gradient_vector(&problem.minibatch_gradient(state, &[i])?);
        for (m, g) in mean.iter_mut().zip(single) {
            *m += g / n as f64;
        }
    }
    let scale = full.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let diff = full.iter().zip(&mean).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(diff / scale.max(f64::MIN_POSITIVE))
}

/// A random small model with events, for oracle comparisons.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub state: ModelState,
    pub grid: ChangePointGrid,
    pub events: EventList,
}

/// Draws `N ∈ [2, max_nodes]`, `K ∈ [2, max_knots]`, a random grid on
/// `[0, T]` with `T ∈ [1, 10]`, coordinates uniform in `[−2, 2]` (distance)
/// or `[0.05, 2]` (projection), `β` uniform in `[−2, 2]` and up to
/// `3·N` events at uniform times on uniform dyads.
pub fn random_instance<R: Rng>(rng: &mut R, variant: Variant, max_nodes: usize, max_knots: usize) -> RandomInstance {
    let n = rng.random_range(2..=max_nodes.max(2));
    let k = rng.random_range(2..=max_knots.max(2));
    let horizon = rng.random_range(1.0..10.0);
    let mut cuts: Vec<f64> = (0..k - 2).map(|_| rng.random_range(0.05..0.95) * horizon).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut knots = vec![0.0];
    for c in cuts {
        if c - knots[knots.len() - 1] > 1e-3 * horizon {
            knots.push(c);
        }
    }
    knots.push(horizon);
    let grid = ChangePointGrid::new(knots).expect("valid random grid");
    let (lo, hi) = match variant {
        Variant::Distance => (-2.0, 2.0),
        Variant::Projection => (0.05, 2.0),
    };
    let data: Vec<f64> = (0..n * grid.num_knots() * 2)
        .map(|_| rng.random_range(lo..hi))
        .collect();
    let traj = TrajectorySet::new(n, grid.num_knots(), 2, data).expect("finite");
    let beta = rng.random_range(-2.0..2.0);
    let state = ModelState::new(variant, traj, beta).expect("valid state");
    let num_events = rng.random_range(0..=3 * n);
    let events: Vec<Event> = (0..num_events)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            Event::new(rng.random_range(0.0..horizon), a, b)
        })
        .collect();
    let events = EventList::new(events, horizon, n).expect("valid events");
    RandomInstance { state, grid, events }
}

/// Φ evaluated by quadrature of the density from 0, for cross-checks of
/// the erfc-based implementation on moderate arguments.
pub fn quadrature_normal_cdf(x: f64) -> f64 {
    let half = adaptive_quadrature(crate::normal::normal_pdf, 0.0, x.abs(), 1e-14);
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// `|Φ(x) − Φ_quadrature(x)|`.
pub fn cdf_discrepancy(x: f64) -> f64 {
    (normal_cdf(x) - quadrature_normal_cdf(x)).abs()
}
