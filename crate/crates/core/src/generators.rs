//! Synthetic interaction data: piecewise-constant blockmodels and exact
//! sampling from the latent position model itself.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{ClpmError, Result};
use crate::projection::dot;
use crate::trajectories::{ChangePointGrid, Event, EventList, ModelState, TrajectorySet, Variant};

/// A node whose every dyad uses a fixed per-segment Poisson mean,
/// regardless of cluster labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateOverride {
    pub node: usize,
    pub mean: f64,
}

/// Piecewise-constant dynamic blockmodel. `theta[s][c][d]` is the expected
/// number of interactions of a dyad with labels `(c, d)` during segment
/// `s`; event times are uniform within the segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub num_nodes: usize,
    pub segment_bounds: Vec<f64>,
    pub memberships: Vec<Vec<usize>>,
    pub theta: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub overrides: Vec<RateOverride>,
}

impl BlockSchedule {
    pub fn num_segments(&self) -> usize {
        self.segment_bounds.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        *self.segment_bounds.last().unwrap_or(&0.0)
    }

    pub fn validate(&self) -> Result<()> {
        ChangePointGrid::new(self.segment_bounds.clone())?;
        let s = self.num_segments();
        if self.memberships.len() != s || self.theta.len() != s {
            return Err(ClpmError::Domain(format!(
                "schedule has {s} segments but {} membership rows and {} rate matrices",
                self.memberships.len(),
                self.theta.len()
            )));
        }
        for (seg, (members, theta)) in self.memberships.iter().zip(&self.theta).enumerate() {
            if members.len() != self.num_nodes {
                return Err(ClpmError::Domain(format!(
                    "segment {seg}: {} memberships for {} nodes",
                    members.len(),
                    self.num_nodes
                )));
            }
            let c = theta.len();
            if theta.iter().any(|row| row.len() != c) {
                return Err(ClpmError::Domain(format!("segment {seg}: rate matrix is not square")));
            }
            if theta.iter().flatten().any(|&x| !(x.is_finite() && x >= 0.0)) {
                return Err(ClpmError::Domain(format!(
                    "segment {seg}: rates must be finite and non-negative"
                )));
            }
            if let Some(&m) = members.iter().find(|&&m| m >= c) {
                return Err(ClpmError::Domain(format!(
                    "segment {seg}: cluster {m} has no rate row ({c} clusters)"
                )));
            }
        }
        for o in &self.overrides {
            if o.node >= self.num_nodes || !(o.mean.is_finite() && o.mean >= 0.0) {
                return Err(ClpmError::Domain(format!("invalid rate override {o:?}")));
            }
        }
        Ok(())
    }

    /// Expected count of dyad `(i, j)` in segment `s`. Overrides take
    /// precedence over cluster rates; a dyad between two overridden nodes
    /// uses the lower of the two means.
    pub fn dyad_mean(&self, s: usize, i: usize, j: usize) -> f64 {
        let over = self
            .overrides
            .iter()
            .filter(|o| o.node == i || o.node == j)
            .map(|o| o.mean)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
        over.unwrap_or_else(|| {
            let m = &self.memberships[s];
            self.theta[s][m[i]][m[j]]
        })
    }
}

fn dyad_rng(seed: u64, dyad: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(dyad);
    rng
}

fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Per dyad and segment: Poisson count with the scheduled mean, then that
/// many i.i.d. uniform times in the segment. Each dyad draws from its own
/// stream of the seeded generator.
pub fn simulate_blockmodel(schedule: &BlockSchedule, seed: u64) -> Result<EventList> {
    schedule.validate()?;
    let n = schedule.num_nodes;
    let mut events = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            events.extend(
                dyad_times(schedule, seed, i, j)
                    .into_iter()
                    .map(|t| Event::new(t, i, j)),
            );
        }
    }
    EventList::new(events, schedule.horizon(), n)
}

/// Event times of dyad `(i, j)`, `i < j`, exactly as drawn by
/// [`simulate_blockmodel`] with the same seed, in generation order.
pub fn simulate_blockmodel_dyad(schedule: &BlockSchedule, seed: u64, i: usize, j: usize) -> Result<Vec<f64>> {
    schedule.validate()?;
    if !(i < j && j < schedule.num_nodes) {
        return Err(ClpmError::Domain(format!(
            "dyad ({i}, {j}) is not an ordered pair of the {} nodes",
            schedule.num_nodes
        )));
    }
    Ok(dyad_times(schedule, seed, i, j))
}

/// Position of `(i, j)`, `i < j`, in the row-major upper triangle.
fn dyad_stream(n: usize, i: usize, j: usize) -> u64 {
    (i * (2 * n - i - 1) / 2 + (j - i - 1)) as u64
}

fn dyad_times(schedule: &BlockSchedule, seed: u64, i: usize, j: usize) -> Vec<f64> {
    let bounds = &schedule.segment_bounds;
    let mut rng = dyad_rng(seed, dyad_stream(schedule.num_nodes, i, j));
    let mut times = Vec::new();
    for s in 0..schedule.num_segments() {
        let count = poisson_count(&mut rng, schedule.dyad_mean(s, i, j));
        let (lo, hi) = (bounds[s], bounds[s + 1]);
        for _ in 0..count {
            times.push(lo + (hi - lo) * rng.random::<f64>());
        }
    }
    times
}

/// Size, hub and isolated node of the first blockmodel scenario.
pub const SIM1_NODES: usize = 60;
pub const SIM1_HUB: usize = 0;
pub const SIM1_ISOLATED: usize = 59;

/// Sixty nodes on `[0, 40]`, four 10-second segments:
/// 1. every dyad has mean 1;
/// 2. three communities of 20 (nodes 0–19, 20–39, 40–59) with within means
///    10, 5 and 1 and between mean 1;
/// 3. the first community splits: nodes 0–9 join 20–39 and 10–19 join
///    40–59; within means 5, between 1;
/// 4. as segment 1.
///
/// Node 0 is a hub (mean 10 with everyone in every segment) and node 59 is
/// isolated (mean 0.01); their shared dyad uses the isolated mean.
pub fn make_sim1_schedule() -> BlockSchedule {
    let n = SIM1_NODES;
    let uniform = vec![0usize; n];
    let three: Vec<usize> = (0..n).map(|i| i / 20).collect();
    let two: Vec<usize> = (0..n)
        .map(|i| match i {
            0..=9 | 20..=39 => 0,
            _ => 1,
        })
        .collect();
    BlockSchedule {
        num_nodes: n,
        segment_bounds: vec![0.0, 10.0, 20.0, 30.0, 40.0],
        memberships: vec![uniform.clone(), three, two, uniform],
        theta: vec![
            vec![vec![1.0]],
            vec![vec![10.0, 1.0, 1.0], vec![1.0, 5.0, 1.0], vec![1.0, 1.0, 1.0]],
            vec![vec![5.0, 1.0], vec![1.0, 5.0]],
            vec![vec![1.0]],
        ],
        overrides: vec![
            RateOverride {
                node: SIM1_HUB,
                mean: 10.0,
            },
            RateOverride {
                node: SIM1_ISOLATED,
                mean: 0.01,
            },
        ],
    }
}

/// Parameters of the cohesion scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sim2Params {
    pub num_nodes: usize,
    pub num_segments: usize,
    pub horizon: f64,
    pub within_start: f64,
    pub within_end: f64,
    pub between: f64,
    /// Node that changes community.
    pub switching_node: usize,
    /// First segment (0-based) in which the switching node has its new label.
    pub switch_segment: usize,
}

impl Default for Sim2Params {
    fn default() -> Self {
        Sim2Params {
            num_nodes: 40,
            num_segments: 40,
            horizon: 40.0,
            within_start: 1.0,
            within_end: 5.0,
            between: 1.0,
            switching_node: 0,
            switch_segment: 20,
        }
    }
}

/// Within-community mean of segment `s` (0-based): linear from start to end
/// across the segments.
pub fn sim2_within_rate(params: &Sim2Params, s: usize) -> f64 {
    if params.num_segments <= 1 {
        return params.within_start;
    }
    params.within_start + (params.within_end - params.within_start) * s as f64 / (params.num_segments - 1) as f64
}

/// Two equal communities (first half and second half of the nodes) whose
/// within-community means grow from 1 to 5 over 40 unit segments while the
/// between mean stays 1; node 0 moves from the first to the second
/// community at `t = 20`.
pub fn make_sim2_schedule() -> BlockSchedule {
    make_sim2_schedule_with(&Sim2Params::default()).expect("default parameters are valid")
}

pub fn make_sim2_schedule_with(params: &Sim2Params) -> Result<BlockSchedule> {
    let n = params.num_nodes;
    if n < 3 || params.switching_node >= n || params.num_segments == 0 {
        return Err(ClpmError::Domain(format!("invalid cohesion scenario {params:?}")));
    }
    let half = n / 2;
    let base: Vec<usize> = (0..n).map(|i| usize::from(i >= half)).collect();
    let mut switched = base.clone();
    switched[params.switching_node] = 1 - base[params.switching_node];
    let s_count = params.num_segments;
    let segment_bounds: Vec<f64> = (0..=s_count)
        .map(|s| params.horizon * s as f64 / s_count as f64)
        .collect();
    let memberships = (0..s_count)
        .map(|s| {
            if s >= params.switch_segment {
                switched.clone()
            } else {
                base.clone()
            }
        })
        .collect();
    let theta = (0..s_count)
        .map(|s| {
            let w = sim2_within_rate(params, s);
            vec![vec![w, params.between], vec![params.between, w]]
        })
        .collect();
    let schedule = BlockSchedule {
        num_nodes: n,
        segment_bounds,
        memberships,
        theta,
        overrides: Vec::new(),
    };
    schedule.validate()?;
    Ok(schedule)
}

/// `n` nodes equally spaced on a circle of the given radius (node `k` at
/// angle `2πk/n`), moving linearly to the origin over `[0, period]` and
/// back over `[period, 2·period]`. The grid is `{0, period, 2·period}`.
pub fn make_ring_trajectories(n: usize, radius: f64, period: f64) -> Result<(TrajectorySet, ChangePointGrid)> {
    if n < 2 {
        return Err(ClpmError::Domain(format!("ring needs at least two nodes, got {n}")));
    }
    let grid = ChangePointGrid::new(vec![0.0, period, 2.0 * period])?;
    let nested: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / n as f64;
            let start = vec![radius * angle.cos(), radius * angle.sin()];
            vec![start.clone(), vec![0.0, 0.0], start]
        })
        .collect();
    Ok((TrajectorySet::from_nested(&nested)?, grid))
}

/// Rate of dyad `(i, j)` at local coordinate `u` of segment `g`.
fn segment_rate(state: &ModelState, i: usize, j: usize, g: usize, u: f64, buf: &mut [Vec<f64>; 2]) -> f64 {
    let traj = state.trajectories();
    let [zi, zj] = buf;
    traj.position_in_segment(i, g, u, zi);
    traj.position_in_segment(j, g, u, zj);
    match state.variant() {
        Variant::Projection => dot(zi, zj),
        Variant::Distance => {
            let d2: f64 = zi.iter().zip(zj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (state.beta() - d2).exp()
        }
    }
}

/// Local coordinate of the vertex of the quadratic that drives the rate of
/// dyad `(i, j)` on segment `g`, when one exists.
fn rate_vertex(state: &ModelState, i: usize, j: usize, g: usize) -> Option<f64> {
    let traj = state.trajectories();
    let (zi0, zi1) = (traj.knot(i, g), traj.knot(i, g + 1));
    let (zj0, zj1) = (traj.knot(j, g), traj.knot(j, g + 1));
    let di: Vec<f64> = zi1.iter().zip(zi0).map(|(a, b)| a - b).collect();
    let dj: Vec<f64> = zj1.iter().zip(zj0).map(|(a, b)| a - b).collect();
    let (quad, lin) = match state.variant() {
        Variant::Distance => {
            // ‖a + u·b‖² with a = zi0 − zj0, b = di − dj
            let a: Vec<f64> = zi0.iter().zip(zj0).map(|(x, y)| x - y).collect();
            let b: Vec<f64> = di.iter().zip(&dj).map(|(x, y)| x - y).collect();
            (dot(&b, &b), 2.0 * dot(&a, &b))
        }
        Variant::Projection => (dot(&di, &dj), dot(zi0, &dj) + dot(&di, zj0)),
    };
    if quad.abs() < f64::MIN_POSITIVE {
        return None;
    }
    Some(-lin / (2.0 * quad))
}

/// Constant rate dominating dyad `(i, j)` on segment `g`: the largest rate
/// among the segment ends and the vertex of the quadratic, when it falls
/// inside the segment.
pub fn thinning_majorant(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize, g: usize) -> f64 {
    debug_assert!(g < grid.num_segments());
    let mut buf = [vec![0.0; state.dim()], vec![0.0; state.dim()]];
    let mut best = segment_rate(state, i, j, g, 0.0, &mut buf).max(segment_rate(state, i, j, g, 1.0, &mut buf));
    if let Some(u) = rate_vertex(state, i, j, g) {
        if (0.0..=1.0).contains(&u) {
            best = best.max(segment_rate(state, i, j, g, u, &mut buf));
        }
    }
    best
}

/// Exact draw of every dyad's inhomogeneous Poisson process by thinning a
/// homogeneous process at the segment majorant.
pub fn simulate_clpm(state: &ModelState, grid: &ChangePointGrid, seed: u64) -> Result<EventList> {
    state.trajectories().check_grid(grid)?;
    let n = state.num_nodes();
    let mut buf = [vec![0.0; state.dim()], vec![0.0; state.dim()]];
    let mut events = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut rng = dyad_rng(seed, dyad_stream(n, i, j));
            for g in 0..grid.num_segments() {
                let bound = thinning_majorant(state, grid, i, j, g);
                if bound.is_nan() || bound <= 0.0 {
                    continue;
                }
                if !bound.is_finite() {
                    return Err(ClpmError::Domain(format!(
                        "rate of dyad ({i}, {j}) is not finite on segment {g}"
                    )));
                }
                let len = grid.segment_len(g);
                let candidates = poisson_count(&mut rng, bound * len);
                for _ in 0..candidates {
                    let u: f64 = rng.random();
                    let accept: f64 = rng.random();
                    if accept * bound < segment_rate(state, i, j, g, u, &mut buf) {
                        events.push(Event::new(grid.knots()[g] + u * len, i, j));
                    }
                }
            }
        }
    }
    EventList::new(events, grid.horizon(), n)
}

/// Parameters of the ring scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingParams {
    pub num_nodes: usize,
    pub radius: f64,
    /// Time taken to reach the origin; the horizon is twice this.
    pub period: f64,
    pub beta: f64,
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams {
            num_nodes: 20,
            radius: 1.0,
            period: 5.0,
            beta: 1.0,
        }
    }
}

/// Generator configuration, readable from a JSON scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum ScenarioSpec {
    Sim1Blocks {
        #[serde(default)]
        seed: u64,
    },
    Sim2Cohesion {
        #[serde(default)]
        seed: u64,
        #[serde(default, flatten)]
        params: Sim2Params,
    },
    Sim3Ring {
        #[serde(default)]
        seed: u64,
        #[serde(default, flatten)]
        params: RingParams,
    },
    Custom {
        #[serde(default)]
        seed: u64,
        schedule: BlockSchedule,
    },
}

/// Ground truth behind a simulated data set.
#[derive(Clone, Debug)]
pub enum Truth {
    Blocks(BlockSchedule),
    Trajectories { state: ModelState, grid: ChangePointGrid },
}

#[derive(Clone, Debug)]
pub struct Simulated {
    pub events: EventList,
    pub truth: Truth,
}

impl ScenarioSpec {
    pub fn seed(&self) -> u64 {
        match self {
            ScenarioSpec::Sim1Blocks { seed }
            | ScenarioSpec::Sim2Cohesion { seed, .. }
            | ScenarioSpec::Sim3Ring { seed, .. }
            | ScenarioSpec::Custom { seed, .. } => *seed,
        }
    }

    pub fn generate(&self) -> Result<Simulated> {
        match self {
            ScenarioSpec::Sim1Blocks { seed } => {
                let schedule = make_sim1_schedule();
                Ok(Simulated {
                    events: simulate_blockmodel(&schedule, *seed)?,
                    truth: Truth::Blocks(schedule),
                })
            }
            ScenarioSpec::Sim2Cohesion { seed, params } => {
                let schedule = make_sim2_schedule_with(params)?;
                Ok(Simulated {
                    events: simulate_blockmodel(&schedule, *seed)?,
                    truth: Truth::Blocks(schedule),
                })
            }
            ScenarioSpec::Sim3Ring { seed, params } => {
                let (traj, grid) = make_ring_trajectories(params.num_nodes, params.radius, params.period)?;
                let state = ModelState::distance(traj, params.beta)?;
                Ok(Simulated {
                    events: simulate_clpm(&state, &grid, *seed)?,
                    truth: Truth::Trajectories { state, grid },
                })
            }
            ScenarioSpec::Custom { seed, schedule } => Ok(Simulated {
                events: simulate_blockmodel(schedule, *seed)?,
                truth: Truth::Blocks(schedule.clone()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectories::interpolate;

    #[test]
    fn dyad_streams_enumerate_the_upper_triangle() {
        let n = 7;
        let mut expected = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                assert_eq!(dyad_stream(n, i, j), expected);
                expected += 1;
            }
        }
    }

    #[test]
    fn single_dyad_matches_full_run() {
        let schedule = make_sim1_schedule();
        let all = simulate_blockmodel(&schedule, 17).unwrap();
        let by_dyad = crate::trajectories::events_by_dyad(&all);
        for (i, j) in [(0, 1), (1, 2), (3, 45), (20, 59), (57, 58)] {
            let mut single = simulate_blockmodel_dyad(&schedule, 17, i, j).unwrap();
            single.sort_by(f64::total_cmp);
            assert_eq!(by_dyad.get(&(i, j)).cloned().unwrap_or_default(), single);
        }
        assert!(simulate_blockmodel_dyad(&schedule, 17, 2, 1).is_err());
    }

    #[test]
    fn zero_rates_give_no_events() {
        let schedule = BlockSchedule {
            num_nodes: 5,
            segment_bounds: vec![0.0, 1.0, 2.0],
            memberships: vec![vec![0; 5], vec![0; 5]],
            theta: vec![vec![vec![0.0]], vec![vec![0.0]]],
            overrides: vec![],
        };
        assert!(simulate_blockmodel(&schedule, 3).unwrap().is_empty());
    }

    #[test]
    fn sim1_schedule_structure() {
        let s = make_sim1_schedule();
        s.validate().unwrap();
        assert_eq!(s.num_segments(), 4);
        assert_eq!(s.horizon(), 40.0);
        for i in 1..59 {
            for j in (i + 1)..59 {
                assert_eq!(s.dyad_mean(0, i, j), 1.0);
                assert_eq!(s.dyad_mean(3, i, j), s.dyad_mean(0, i, j));
            }
        }
        assert_eq!(s.dyad_mean(1, 1, 2), 10.0);
        assert_eq!(s.dyad_mean(1, 20, 21), 5.0);
        assert_eq!(s.dyad_mean(1, 40, 41), 1.0);
        assert_eq!(s.dyad_mean(1, 1, 21), 1.0);
        // split: 1..9 joins 20..39, 10..19 joins 40..58
        assert_eq!(s.dyad_mean(2, 1, 25), 5.0);
        assert_eq!(s.dyad_mean(2, 12, 45), 5.0);
        assert_eq!(s.dyad_mean(2, 1, 12), 1.0);
        for seg in 0..4 {
            assert_eq!(s.dyad_mean(seg, 0, 33), 10.0);
            assert_eq!(s.dyad_mean(seg, 7, 59), 0.01);
            assert_eq!(s.dyad_mean(seg, 0, 59), 0.01);
        }
    }

    #[test]
    fn sim2_schedule_structure() {
        let p = Sim2Params::default();
        let s = make_sim2_schedule();
        assert_eq!(s.num_segments(), 40);
        for seg in 0..40 {
            let expected = 1.0 + 4.0 * seg as f64 / 39.0;
            assert!((sim2_within_rate(&p, seg) - expected).abs() < 1e-15);
            assert_eq!(s.dyad_mean(seg, 3, 5), sim2_within_rate(&p, seg));
            assert_eq!(s.dyad_mean(seg, 3, 25), 1.0);
        }
        assert_eq!(s.dyad_mean(19, 0, 5), sim2_within_rate(&p, 19));
        assert_eq!(s.dyad_mean(19, 0, 25), 1.0);
        assert_eq!(s.dyad_mean(20, 0, 5), 1.0);
        assert_eq!(s.dyad_mean(20, 0, 25), sim2_within_rate(&p, 20));
    }

    #[test]
    fn ring_geometry() {
        let (traj, grid) = make_ring_trajectories(20, 1.0, 5.0).unwrap();
        assert_eq!(grid.knots(), &[0.0, 5.0, 10.0]);
        for k in 0..20 {
            let angle = 2.0 * PI * k as f64 / 20.0;
            let p0 = interpolate(&traj, &grid, k, 0.0).unwrap();
            assert!((p0[0] - angle.cos()).abs() < 1e-15 && (p0[1] - angle.sin()).abs() < 1e-15);
            assert_eq!(interpolate(&traj, &grid, k, 5.0).unwrap(), vec![0.0, 0.0]);
            let half = interpolate(&traj, &grid, k, 2.5).unwrap();
            assert!((half[0] - 0.5 * p0[0]).abs() < 1e-15);
            assert!((half[1] - 0.5 * p0[1]).abs() < 1e-15);
            assert_eq!(interpolate(&traj, &grid, k, 10.0).unwrap(), p0);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = simulate_blockmodel(&make_sim1_schedule(), 5).unwrap();
        let b = simulate_blockmodel(&make_sim1_schedule(), 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_blockmodel(&make_sim1_schedule(), 6).unwrap();
        assert_ne!(a, c);
        let spec = ScenarioSpec::Sim3Ring {
            seed: 9,
            params: RingParams::default(),
        };
        assert_eq!(spec.generate().unwrap().events, spec.generate().unwrap().events);
    }

    #[test]
    fn vanishing_rate_gives_empty_event_list() {
        let (traj, grid) = make_ring_trajectories(6, 1.0, 5.0).unwrap();
        let state = ModelState::distance(traj, -50.0).unwrap();
        assert!(simulate_clpm(&state, &grid, 1).unwrap().is_empty());
    }

    #[test]
    fn majorant_dominates_on_dense_grid() {
        let (traj, grid) = make_ring_trajectories(8, 1.0, 5.0).unwrap();
        let distance = ModelState::distance(traj, 0.5).unwrap();
        let positive = TrajectorySet::from_nested(&[
            vec![vec![0.2, 1.5], vec![1.5, 0.2], vec![0.7, 0.7]],
            vec![vec![1.0, 0.1], vec![0.1, 1.0], vec![2.0, 0.3]],
            vec![vec![0.5, 0.5], vec![0.4, 0.6], vec![0.1, 0.9]],
        ])
        .unwrap();
        let projection = ModelState::projection(positive).unwrap();
        for state in [distance, projection] {
            let n = state.num_nodes();
            let mut buf = [vec![0.0; 2], vec![0.0; 2]];
            for i in 0..n {
                for j in (i + 1)..n {
                    for g in 0..grid.num_segments() {
                        let bound = thinning_majorant(&state, &grid, i, j, g);
                        for s in 0..=1000 {
                            let u = s as f64 / 1000.0;
                            let r = segment_rate(&state, i, j, g, u, &mut buf);
                            assert!(r <= bound * (1.0 + 1e-12), "{i} {j} {g} {u}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn scenario_specs_parse_from_json() {
        let spec: ScenarioSpec = serde_json::from_str(r#"{"scenario": "sim3_ring", "seed": 4, "beta": 0.5}"#).unwrap();
        match spec {
            ScenarioSpec::Sim3Ring { seed, params } => {
                assert_eq!(seed, 4);
                assert_eq!(params.beta, 0.5);
                assert_eq!(params.num_nodes, 20);
            }
            other => panic!("unexpected {other:?}"),
        }
        let spec: ScenarioSpec = serde_json::from_str(r#"{"scenario": "sim2_cohesion", "num_nodes": 10}"#).unwrap();
        assert!(matches!(spec, ScenarioSpec::Sim2Cohesion { params, .. } if params.num_nodes == 10));
    }
}
