//! Penalized log-likelihood, its per-node decomposition and exact
//! gradients.

use crate::distance::{unit_segment_integral, unit_segment_moments};
use crate::error::{ClpmError, Result};
use crate::penalties::{self, PenaltyParams};
use crate::projection::{self, dot, RATE_FLOOR};
use crate::trajectories::{ChangePointGrid, EventList, ModelState, TrajectorySet, Variant};

/// Gradient of the penalized objective.
///
/// For the distance variant `positions` holds derivatives with respect to
/// the knot coordinates. For the projection variant it holds derivatives
/// with respect to the unconstrained parameters `w` with
/// `z = softplus(w)`, and `beta` is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub beta: f64,
    pub positions: Vec<f64>,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Gradient {
            beta: 0.0,
            positions: vec![0.0; len],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.positions.iter().fold(self.beta.abs(), |m, g| m.max(g.abs()))
    }
}

/// `ψ_i`: half of every dyadic term involving node `i` plus its full
/// penalty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeObjectiveTerm {
    pub node: usize,
    pub value: f64,
}

/// Objective split into its additive parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveParts {
    /// `Σ_e log λ(τ_e)` over all events.
    pub event_term: f64,
    /// `Σ_{i<j} ∫ λ_ij`.
    pub integral_term: f64,
    pub penalty: f64,
    /// `event_term − integral_term + penalty`.
    pub total: f64,
    /// Number of events whose projection rate hit the floor.
    pub floored_events: usize,
}

#[derive(Clone, Copy, Debug)]
struct LocatedEvent {
    segment: usize,
    u: f64,
}

/// Events and grid preprocessed for repeated objective and gradient
/// evaluation: every event is located in its segment once, and events are
/// grouped by dyad.
#[derive(Clone, Debug)]
pub struct Problem {
    variant: Variant,
    grid: ChangePointGrid,
    num_nodes: usize,
    num_events: usize,
    penalty: PenaltyParams,
    dyad_events: Vec<Vec<LocatedEvent>>,
}

struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    zi: Vec<f64>,
    zj: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            a: vec![0.0; d],
            b: vec![0.0; d],
            c: vec![0.0; d],
            zi: vec![0.0; d],
            zj: vec![0.0; d],
        }
    }
}

impl Problem {
    pub fn new(variant: Variant, grid: ChangePointGrid, events: &EventList, penalty: PenaltyParams) -> Result<Self> {
        penalty.validate()?;
        let num_nodes = events.num_nodes();
        if events.horizon() > grid.horizon() * (1.0 + 1e-12) {
            return Err(ClpmError::Domain(format!(
                "events extend to {} but the grid ends at {}",
                events.horizon(),
                grid.horizon()
            )));
        }
        let num_dyads = num_nodes * num_nodes.saturating_sub(1) / 2;
        let mut dyad_events = vec![Vec::new(); num_dyads];
        for e in events.iter() {
            let segment = grid.locate_segment(e.time)?;
            let u = grid.local_coordinate(segment, e.time);
            dyad_events[dyad_index(num_nodes, e.a, e.b)].push(LocatedEvent { segment, u });
        }
        Ok(Problem {
            variant,
            grid,
            num_nodes,
            num_events: events.len(),
            penalty,
            dyad_events,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn grid(&self) -> &ChangePointGrid {
        &self.grid
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_events(&self) -> usize {
        self.num_events
    }

    pub fn penalty(&self) -> &PenaltyParams {
        &self.penalty
    }

    pub fn dyad_event_count(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.dyad_events[dyad_index(self.num_nodes, i, j)].len()
    }

    fn check_state(&self, state: &ModelState) -> Result<()> {
        state.expect_variant(self.variant)?;
        state.trajectories().check_grid(&self.grid)?;
        if state.num_nodes() != self.num_nodes {
            return Err(ClpmError::Domain(format!(
                "state has {} nodes but the data has {}",
                state.num_nodes(),
                self.num_nodes
            )));
        }
        Ok(())
    }

    /// Event term and integral of one dyad (`i < j`); the third value counts
    /// floored projection rates.
    fn dyad_value(&self, state: &ModelState, i: usize, j: usize, s: &mut Scratch) -> (f64, f64, usize) {
        let traj = state.trajectories();
        let events = &self.dyad_events[dyad_index(self.num_nodes, i, j)];
        let mut event_term = 0.0;
        let mut floored = 0;
        match self.variant {
            Variant::Distance => {
                let beta = state.beta();
                for ev in events {
                    traj.position_in_segment(i, ev.segment, ev.u, &mut s.zi);
                    traj.position_in_segment(j, ev.segment, ev.u, &mut s.zj);
                    let d2: f64 = s.zi.iter().zip(&s.zj).map(|(x, y)| (x - y) * (x - y)).sum();
                    event_term += beta - d2;
                }
                let integral = distance_dyad_integral(traj, &self.grid, beta, i, j, s);
                (event_term, integral, 0)
            }
            Variant::Projection => {
                for ev in events {
                    traj.position_in_segment(i, ev.segment, ev.u, &mut s.zi);
                    traj.position_in_segment(j, ev.segment, ev.u, &mut s.zj);
                    let rate = dot(&s.zi, &s.zj);
                    if rate <= RATE_FLOOR {
                        floored += 1;
                    }
                    event_term += rate.max(RATE_FLOOR).ln();
                }
                let integral = projection::dyad_integral(traj, &self.grid, i, j);
                (event_term, integral, floored)
            }
        }
    }

    fn node_penalty(&self, traj: &TrajectorySet, i: usize) -> Result<f64> {
        match self.variant {
            Variant::Distance => Ok(penalties::distance_node(traj, &self.grid, &self.penalty, i)),
            Variant::Projection => penalties::projection_node(traj, &self.grid, &self.penalty, i),
        }
    }

    pub fn objective_parts(&self, state: &ModelState) -> Result<ObjectiveParts> {
        self.check_state(state)?;
        let mut s = Scratch::new(state.dim());
        let n = self.num_nodes;
        let (mut event_term, mut integral_term, mut floored_events) = (0.0, 0.0, 0);
        for i in 0..n {
            for j in (i + 1)..n {
                let (e, integral, f) = self.dyad_value(state, i, j, &mut s);
                event_term += e;
                integral_term += integral;
                floored_events += f;
            }
        }
        let mut penalty = 0.0;
        for i in 0..n {
            penalty += self.node_penalty(state.trajectories(), i)?;
        }
        if floored_events > 0 {
            log::warn!("{floored_events} event(s) hit the projection rate floor {RATE_FLOOR:e}");
        }
        Ok(ObjectiveParts {
            event_term,
            integral_term,
            penalty,
            total: event_term - integral_term + penalty,
            floored_events,
        })
    }

    pub fn objective(&self, state: &ModelState) -> Result<f64> {
        Ok(self.objective_parts(state)?.total)
    }

    pub fn node_term(&self, state: &ModelState, i: usize) -> Result<NodeObjectiveTerm> {
        self.check_state(state)?;
        self.check_node(i)?;
        let mut s = Scratch::new(state.dim());
        let mut dyadic = 0.0;
        for j in (0..self.num_nodes).filter(|&j| j != i) {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            let (e, integral, _) = self.dyad_value(state, lo, hi, &mut s);
            dyadic += e - integral;
        }
        Ok(NodeObjectiveTerm {
            node: i,
            value: 0.5 * dyadic + self.node_penalty(state.trajectories(), i)?,
        })
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.num_nodes {
            return Err(ClpmError::Domain(format!(
                "node {i} out of range (N = {})",
                self.num_nodes
            )));
        }
        Ok(())
    }

    /// Adds `weight · ∇(event term − integral)` of dyad `(i, j)`, `i < j`,
    /// with respect to `β` and the knot coordinates.
    fn dyad_grad(&self, state: &ModelState, i: usize, j: usize, weight: f64, grad: &mut Gradient, s: &mut Scratch) {
        let traj = state.trajectories();
        let d = traj.dim();
        let events = &self.dyad_events[dyad_index(self.num_nodes, i, j)];
        let g_pos = &mut grad.positions;
        match self.variant {
            Variant::Distance => {
                let beta = state.beta();
                grad.beta += weight * events.len() as f64;
                for ev in events {
                    traj.position_in_segment(i, ev.segment, ev.u, &mut s.zi);
                    traj.position_in_segment(j, ev.segment, ev.u, &mut s.zj);
                    let (oi0, oi1) = (traj.offset(i, ev.segment), traj.offset(i, ev.segment + 1));
                    let (oj0, oj1) = (traj.offset(j, ev.segment), traj.offset(j, ev.segment + 1));
                    for k in 0..d {
                        let diff = -2.0 * weight * (s.zi[k] - s.zj[k]);
                        g_pos[oi0 + k] += (1.0 - ev.u) * diff;
                        g_pos[oi1 + k] += ev.u * diff;
                        g_pos[oj0 + k] -= (1.0 - ev.u) * diff;
                        g_pos[oj1 + k] -= ev.u * diff;
                    }
                }
                let data = traj.as_slice();
                for g in 0..self.grid.num_segments() {
                    let len = self.grid.segment_len(g);
                    let (oi0, oi1) = (traj.offset(i, g), traj.offset(i, g + 1));
                    let (oj0, oj1) = (traj.offset(j, g), traj.offset(j, g + 1));
                    for k in 0..d {
                        s.a[k] = data[oi0 + k] - data[oj0 + k];
                        s.c[k] = data[oi1 + k] - data[oj1 + k];
                        s.b[k] = s.c[k] - s.a[k];
                    }
                    let [j0, j1, j2] = unit_segment_moments(&s.a, &s.b, beta);
                    grad.beta -= weight * len * j0;
                    // −∂I/∂a = 2L[a(J0 − J1) + b(J1 − J2)], −∂I/∂c = 2L[aJ1 + bJ2]
                    let coef = 2.0 * weight * len;
                    for k in 0..d {
                        let da = coef * (s.a[k] * (j0 - j1) + s.b[k] * (j1 - j2));
                        let dc = coef * (s.a[k] * j1 + s.b[k] * j2);
                        g_pos[oi0 + k] += da;
                        g_pos[oj0 + k] -= da;
                        g_pos[oi1 + k] += dc;
                        g_pos[oj1 + k] -= dc;
                    }
                }
            }
            Variant::Projection => {
                for ev in events {
                    traj.position_in_segment(i, ev.segment, ev.u, &mut s.zi);
                    traj.position_in_segment(j, ev.segment, ev.u, &mut s.zj);
                    let rate = dot(&s.zi, &s.zj);
                    if rate <= RATE_FLOOR {
                        continue;
                    }
                    let scale = weight / rate;
                    let (oi0, oi1) = (traj.offset(i, ev.segment), traj.offset(i, ev.segment + 1));
                    let (oj0, oj1) = (traj.offset(j, ev.segment), traj.offset(j, ev.segment + 1));
                    for k in 0..d {
                        g_pos[oi0 + k] += scale * (1.0 - ev.u) * s.zj[k];
                        g_pos[oi1 + k] += scale * ev.u * s.zj[k];
                        g_pos[oj0 + k] += scale * (1.0 - ev.u) * s.zi[k];
                        g_pos[oj1 + k] += scale * ev.u * s.zi[k];
                    }
                }
                projection::dyad_integral_grad(traj, &self.grid, i, j, -weight, g_pos);
            }
        }
    }

    fn node_penalty_grad(&self, traj: &TrajectorySet, i: usize, weight: f64, grad: &mut Gradient) -> Result<()> {
        match self.variant {
            Variant::Distance => {
                penalties::distance_node_grad(traj, &self.grid, &self.penalty, i, weight, &mut grad.positions);
                Ok(())
            }
            Variant::Projection => {
                penalties::projection_node_grad(traj, &self.grid, &self.penalty, i, weight, &mut grad.positions)
            }
        }
    }

    /// Converts a gradient with respect to `z` into one with respect to the
    /// unconstrained projection parameters: `dz/dw = 1 − e^{−z}`.
    fn finish(&self, state: &ModelState, mut grad: Gradient) -> Gradient {
        if self.variant == Variant::Projection {
            for (g, &z) in grad.positions.iter_mut().zip(state.trajectories().as_slice()) {
                *g *= -(-z).exp_m1();
            }
            grad.beta = 0.0;
        }
        grad
    }

    /// Exact gradient of [`Problem::objective`].
    pub fn gradient(&self, state: &ModelState) -> Result<Gradient> {
        self.check_state(state)?;
        let traj = state.trajectories();
        let mut grad = Gradient::zeros(traj.as_slice().len());
        let mut s = Scratch::new(state.dim());
        let n = self.num_nodes;
        for i in 0..n {
            for j in (i + 1)..n {
                self.dyad_grad(state, i, j, 1.0, &mut grad, &mut s);
            }
        }
        for i in 0..n {
            self.node_penalty_grad(traj, i, 1.0, &mut grad)?;
        }
        Ok(self.finish(state, grad))
    }

    /// `∇ψ_i`, scaled by `weight` and added into `grad` (before the
    /// projection chain rule is applied).
    fn accumulate_node_grad(
        &self,
        state: &ModelState,
        i: usize,
        weight: f64,
        grad: &mut Gradient,
        s: &mut Scratch,
    ) -> Result<()> {
        for j in (0..self.num_nodes).filter(|&j| j != i) {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            self.dyad_grad(state, lo, hi, 0.5 * weight, grad, s);
        }
        self.node_penalty_grad(state.trajectories(), i, weight, grad)
    }

    /// `∇ψ_i`.
    pub fn node_gradient(&self, state: &ModelState, i: usize) -> Result<Gradient> {
        self.check_state(state)?;
        self.check_node(i)?;
        let mut grad = Gradient::zeros(state.trajectories().as_slice().len());
        let mut s = Scratch::new(state.dim());
        self.accumulate_node_grad(state, i, 1.0, &mut grad, &mut s)?;
        Ok(self.finish(state, grad))
    }

    /// `(n/|B|) Σ_{i∈B} ∇ψ_i`; repeated nodes in `batch` count repeatedly.
    pub fn minibatch_gradient(&self, state: &ModelState, batch: &[usize]) -> Result<Gradient> {
        self.check_state(state)?;
        if batch.is_empty() {
            return Err(ClpmError::Domain("minibatch must contain at least one node".into()));
        }
        for &i in batch {
            self.check_node(i)?;
        }
        let weight = self.num_nodes as f64 / batch.len() as f64;
        let mut grad = Gradient::zeros(state.trajectories().as_slice().len());
        let mut s = Scratch::new(state.dim());
        for &i in batch {
            self.accumulate_node_grad(state, i, weight, &mut grad, &mut s)?;
        }
        Ok(self.finish(state, grad))
    }
}

fn distance_dyad_integral(
    traj: &TrajectorySet,
    grid: &ChangePointGrid,
    beta: f64,
    i: usize,
    j: usize,
    s: &mut Scratch,
) -> f64 {
    let d = traj.dim();
    let data = traj.as_slice();
    let mut total = 0.0;
    for g in 0..grid.num_segments() {
        let (oi0, oi1) = (traj.offset(i, g), traj.offset(i, g + 1));
        let (oj0, oj1) = (traj.offset(j, g), traj.offset(j, g + 1));
        for k in 0..d {
            s.a[k] = data[oi0 + k] - data[oj0 + k];
            s.c[k] = data[oi1 + k] - data[oj1 + k];
        }
        total += grid.segment_len(g) * unit_segment_integral(&s.a, &s.c, beta);
    }
    total
}

/// Position of dyad `(i, j)`, `i < j`, in the row-major upper triangle.
#[inline]
pub(crate) fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

fn problem_for(
    state: &ModelState,
    grid: &ChangePointGrid,
    events: &EventList,
    penalty: &PenaltyParams,
) -> Result<Problem> {
    Problem::new(state.variant(), grid.clone(), events, *penalty)
}

/// Variant log-likelihood plus variant penalty, constants dropped.
pub fn objective(
    state: &ModelState,
    grid: &ChangePointGrid,
    events: &EventList,
    penalty: &PenaltyParams,
) -> Result<f64> {
    problem_for(state, grid, events, penalty)?.objective(state)
}

/// `ψ_i` for node `i`.
pub fn node_term(
    state: &ModelState,
    grid: &ChangePointGrid,
    events: &EventList,
    penalty: &PenaltyParams,
    i: usize,
) -> Result<NodeObjectiveTerm> {
    problem_for(state, grid, events, penalty)?.node_term(state, i)
}

pub fn gradient(
    state: &ModelState,
    grid: &ChangePointGrid,
    events: &EventList,
    penalty: &PenaltyParams,
) -> Result<Gradient> {
    problem_for(state, grid, events, penalty)?.gradient(state)
}

pub fn minibatch_gradient_estimate(
    state: &ModelState,
    grid: &ChangePointGrid,
    events: &EventList,
    penalty: &PenaltyParams,
    batch: &[usize],
) -> Result<Gradient> {
    problem_for(state, grid, events, penalty)?.minibatch_gradient(state, batch)
}
