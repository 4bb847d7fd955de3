//! Event lists, the shared change-point grid and piecewise-linear latent
//! trajectories.
//!
//! Node trajectories are stored only at the change points; positions in
//! between are recovered by linear interpolation inside the enclosing
//! segment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ClpmError, Result};

/// Which link between latent positions and interaction rates is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Rate equals the dot product of the two positions (positive orthant).
    Projection,
    /// Log-rate equals an intercept minus the squared distance.
    Distance,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Projection => f.write_str("projection"),
            Variant::Distance => f.write_str("distance"),
        }
    }
}

impl FromStr for Variant {
    type Err = ClpmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "projection" => Ok(Variant::Projection),
            "distance" => Ok(Variant::Distance),
            other => Err(ClpmError::Domain(format!("unknown variant '{other}'"))),
        }
    }
}

/// One instantaneous interaction. After construction through [`EventList`]
/// the endpoints satisfy `a < b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub a: usize,
    pub b: usize,
}

impl Event {
    pub fn new(time: f64, a: usize, b: usize) -> Self {
        Event { time, a, b }
    }

    pub fn dyad(&self) -> (usize, usize) {
        (self.a, self.b)
    }
}

/// Undirected interactions observed on `[0, horizon]`, sorted by time.
#[derive(Clone, Debug, PartialEq)]
pub struct EventList {
    events: Vec<Event>,
    horizon: f64,
    num_nodes: usize,
}

impl EventList {
    /// Validates, canonicalizes the direction of every event and sorts by
    /// time (stable, so simultaneous events keep their input order).
    pub fn new(events: Vec<Event>, horizon: f64, num_nodes: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ClpmError::InvalidEvents(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let mut events = events;
        for (idx, e) in events.iter_mut().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 || e.time > horizon {
                return Err(ClpmError::InvalidEvents(format!(
                    "event {idx} has time {} outside [0, {horizon}]",
                    e.time
                )));
            }
            if e.a == e.b {
                return Err(ClpmError::InvalidEvents(format!(
                    "event {idx} is a self loop on node {}",
                    e.a
                )));
            }
            if e.a >= num_nodes || e.b >= num_nodes {
                return Err(ClpmError::InvalidEvents(format!(
                    "event {idx} references node {} but there are only {num_nodes} nodes",
                    e.a.max(e.b)
                )));
            }
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        events.sort_by(|x, y| x.time.total_cmp(&y.time));
        Ok(EventList {
            events,
            horizon,
            num_nodes,
        })
    }

    pub fn empty(horizon: f64, num_nodes: usize) -> Result<Self> {
        Self::new(Vec::new(), horizon, num_nodes)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
}

/// Partitions events into per-dyad ordered time lists. Dyads without events
/// are absent from the map.
pub fn events_by_dyad(events: &EventList) -> BTreeMap<(usize, usize), Vec<f64>> {
    let mut out: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for e in events.iter() {
        out.entry(e.dyad()).or_default().push(e.time);
    }
    out
}

/// Strictly increasing change points `0 = η_0 < … < η_{K−1} = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangePointGrid {
    knots: Vec<f64>,
}

impl ChangePointGrid {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(ClpmError::InvalidGrid(format!(
                "need at least 2 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(ClpmError::InvalidGrid("knots must be finite".into()));
        }
        if knots[0] != 0.0 {
            return Err(ClpmError::InvalidGrid(format!(
                "first knot must be 0, got {}",
                knots[0]
            )));
        }
        if let Some(w) = knots.windows(2).find(|w| w[1] <= w[0]) {
            return Err(ClpmError::InvalidGrid(format!(
                "knots must be strictly increasing ({} is followed by {})",
                w[0], w[1]
            )));
        }
        Ok(ChangePointGrid { knots })
    }

    /// `num_knots` equally spaced knots on `[0, horizon]`.
    pub fn uniform(horizon: f64, num_knots: usize) -> Result<Self> {
        if num_knots < 2 {
            return Err(ClpmError::InvalidGrid(format!(
                "need at least 2 knots, got {num_knots}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ClpmError::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let last = (num_knots - 1) as f64;
        let mut knots: Vec<f64> = (0..num_knots).map(|k| horizon * k as f64 / last).collect();
        knots[num_knots - 1] = horizon;
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn num_segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn segment_len(&self, g: usize) -> f64 {
        self.knots[g + 1] - self.knots[g]
    }

    /// Index `g` with `η_g ≤ t < η_{g+1}`; `t = T` belongs to the last segment.
    pub fn locate_segment(&self, t: f64) -> Result<usize> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(ClpmError::TimeOutOfRange { t, horizon });
        }
        let upper = self.knots.partition_point(|&k| k <= t);
        Ok((upper - 1).min(self.num_segments() - 1))
    }

    /// Local coordinate `u = (t − η_g)/(η_{g+1} − η_g)` inside segment `g`.
    pub fn local_coordinate(&self, g: usize, t: f64) -> f64 {
        (t - self.knots[g]) / self.segment_len(g)
    }
}

/// Knot positions of every node, laid out node-major as `N × K × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    num_nodes: usize,
    num_knots: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TrajectorySet {
    pub fn new(num_nodes: usize, num_knots: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(ClpmError::InvalidTrajectories(
                "latent dimension must be at least 1".into(),
            ));
        }
        if num_knots < 2 {
            return Err(ClpmError::InvalidTrajectories(format!(
                "need at least 2 knots, got {num_knots}"
            )));
        }
        if data.len() != num_nodes * num_knots * dim {
            return Err(ClpmError::InvalidTrajectories(format!(
                "expected {} coordinates for shape {num_nodes}×{num_knots}×{dim}, got {}",
                num_nodes * num_knots * dim,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(ClpmError::InvalidTrajectories("coordinates must be finite".into()));
        }
        Ok(TrajectorySet {
            num_nodes,
            num_knots,
            dim,
            data,
        })
    }

    pub fn zeros(num_nodes: usize, num_knots: usize, dim: usize) -> Result<Self> {
        Self::new(num_nodes, num_knots, dim, vec![0.0; num_nodes * num_knots * dim])
    }

    /// Builds a set from `positions[node][knot] = coordinates`.
    pub fn from_nested(positions: &[Vec<Vec<f64>>]) -> Result<Self> {
        let num_nodes = positions.len();
        let num_knots = positions.first().map_or(0, |p| p.len());
        let dim = positions.first().and_then(|p| p.first()).map_or(0, |c| c.len());
        let mut data = Vec::with_capacity(num_nodes * num_knots * dim);
        for (i, node) in positions.iter().enumerate() {
            if node.len() != num_knots {
                return Err(ClpmError::InvalidTrajectories(format!(
                    "node {i} has {} knots, expected {num_knots}",
                    node.len()
                )));
            }
            for (g, coords) in node.iter().enumerate() {
                if coords.len() != dim {
                    return Err(ClpmError::InvalidTrajectories(format!(
                        "node {i} knot {g} has dimension {}, expected {dim}",
                        coords.len()
                    )));
                }
                data.extend_from_slice(coords);
            }
        }
        Self::new(num_nodes, num_knots, dim, data)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_nodes)
            .map(|i| (0..self.num_knots).map(|g| self.knot(i, g).to_vec()).collect())
            .collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_knots(&self) -> usize {
        self.num_knots
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn offset(&self, node: usize, knot: usize) -> usize {
        (node * self.num_knots + knot) * self.dim
    }

    #[inline]
    pub fn knot(&self, node: usize, knot: usize) -> &[f64] {
        let o = self.offset(node, knot);
        &self.data[o..o + self.dim]
    }

    #[inline]
    pub fn knot_mut(&mut self, node: usize, knot: usize) -> &mut [f64] {
        let o = self.offset(node, knot);
        let d = self.dim;
        &mut self.data[o..o + d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw coordinates. Callers must keep them finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Writes the position of `node` at local coordinate `u` of segment `g`
    /// into `out`.
    #[inline]
    pub fn position_in_segment(&self, node: usize, g: usize, u: f64, out: &mut [f64]) {
        let lo = self.knot(node, g);
        let hi = self.knot(node, g + 1);
        for c in 0..self.dim {
            out[c] = (1.0 - u) * lo[c] + u * hi[c];
        }
    }

    pub fn check_grid(&self, grid: &ChangePointGrid) -> Result<()> {
        if grid.num_knots() != self.num_knots {
            return Err(ClpmError::InvalidTrajectories(format!(
                "trajectories have {} knots but the grid has {}",
                self.num_knots,
                grid.num_knots()
            )));
        }
        Ok(())
    }
}

/// Position of `node` at time `t`.
pub fn interpolate(trajectories: &TrajectorySet, grid: &ChangePointGrid, node: usize, t: f64) -> Result<Vec<f64>> {
    trajectories.check_grid(grid)?;
    if node >= trajectories.num_nodes() {
        return Err(ClpmError::Domain(format!(
            "node {node} out of range (N = {})",
            trajectories.num_nodes()
        )));
    }
    let g = grid.locate_segment(t)?;
    let mut out = vec![0.0; trajectories.dim()];
    trajectories.position_in_segment(node, g, grid.local_coordinate(g, t), &mut out);
    Ok(out)
}

/// Latent trajectories plus the variant tag and, for the distance variant,
/// the global intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    variant: Variant,
    trajectories: TrajectorySet,
    beta: f64,
}

impl ModelState {
    pub fn distance(trajectories: TrajectorySet, beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(ClpmError::Domain(format!("intercept must be finite, got {beta}")));
        }
        Ok(ModelState {
            variant: Variant::Distance,
            trajectories,
            beta,
        })
    }

    /// Projection states carry no intercept; every coordinate must be
    /// strictly positive.
    pub fn projection(trajectories: TrajectorySet) -> Result<Self> {
        if let Some(x) = trajectories.as_slice().iter().find(|&&x| x <= 0.0) {
            return Err(ClpmError::InvalidTrajectories(format!(
                "projection positions must lie in the open positive orthant (found {x})"
            )));
        }
        Ok(ModelState {
            variant: Variant::Projection,
            trajectories,
            beta: 0.0,
        })
    }

    pub fn new(variant: Variant, trajectories: TrajectorySet, beta: f64) -> Result<Self> {
        match variant {
            Variant::Distance => Self::distance(trajectories, beta),
            Variant::Projection => Self::projection(trajectories),
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn trajectories(&self) -> &TrajectorySet {
        &self.trajectories
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_nodes(&self) -> usize {
        self.trajectories.num_nodes()
    }

    pub fn dim(&self) -> usize {
        self.trajectories.dim()
    }

    pub fn expect_variant(&self, expected: Variant) -> Result<()> {
        if self.variant != expected {
            return Err(ClpmError::VariantMismatch {
                expected,
                found: self.variant,
            });
        }
        Ok(())
    }

    pub fn into_parts(self) -> (Variant, TrajectorySet, f64) {
        (self.variant, self.trajectories, self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_0_10_20() -> ChangePointGrid {
        ChangePointGrid::new(vec![0.0, 10.0, 20.0]).unwrap()
    }

    #[test]
    fn locate_segment_conventions() {
        let grid = grid_0_10_20();
        assert_eq!(grid.locate_segment(0.0).unwrap(), 0);
        assert_eq!(grid.locate_segment(20.0).unwrap(), 1);
        assert_eq!(grid.locate_segment(9.999).unwrap(), 0);
        assert_eq!(grid.locate_segment(10.0).unwrap(), 1);
    }

    #[test]
    fn locate_segment_rejects_out_of_range() {
        let grid = grid_0_10_20();
        assert!(matches!(
            grid.locate_segment(-0.1),
            Err(ClpmError::TimeOutOfRange { .. })
        ));
        assert!(grid.locate_segment(20.000001).is_err());
        assert!(grid.locate_segment(f64::NAN).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(ChangePointGrid::new(vec![0.0]).is_err());
        assert!(ChangePointGrid::new(vec![1.0, 2.0]).is_err());
        assert!(ChangePointGrid::new(vec![0.0, 2.0, 2.0]).is_err());
        let g = ChangePointGrid::uniform(40.0, 17).unwrap();
        assert_eq!(g.num_knots(), 17);
        assert_eq!(g.knots()[16], 40.0);
        assert_eq!(g.knots()[1], 2.5);
    }

    #[test]
    fn interpolation_at_knots_midpoints_and_quarter() {
        let grid = ChangePointGrid::new(vec![0.0, 1.0, 3.0]).unwrap();
        let traj = TrajectorySet::from_nested(&[vec![vec![0.0, 0.0], vec![4.0, 2.0], vec![-2.0, 6.0]]]).unwrap();
        assert_eq!(interpolate(&traj, &grid, 0, 1.0).unwrap(), vec![4.0, 2.0]);
        assert_eq!(interpolate(&traj, &grid, 0, 3.0).unwrap(), vec![-2.0, 6.0]);
        assert_eq!(interpolate(&traj, &grid, 0, 2.0).unwrap(), vec![1.0, 4.0]);
        assert_eq!(interpolate(&traj, &grid, 0, 0.25).unwrap(), vec![1.0, 0.5]);
        assert!(interpolate(&traj, &grid, 0, 3.5).is_err());
        assert!(interpolate(&traj, &grid, 1, 0.5).is_err());
    }

    #[test]
    fn knot_boundary_agrees_from_both_segments() {
        let grid = grid_0_10_20();
        let traj = TrajectorySet::from_nested(&[vec![vec![0.3, -1.0], vec![2.0, 5.0], vec![7.0, 1.0]]]).unwrap();
        let mut left = [0.0; 2];
        let mut right = [0.0; 2];
        traj.position_in_segment(0, 0, 1.0, &mut left);
        traj.position_in_segment(0, 1, 0.0, &mut right);
        assert_eq!(left, right);
        assert_eq!(left.to_vec(), traj.knot(0, 1).to_vec());
        assert_eq!(interpolate(&traj, &grid, 0, 10.0).unwrap(), traj.knot(0, 1).to_vec());
    }

    #[test]
    fn event_list_canonicalizes_and_sorts() {
        let list = EventList::new(vec![Event::new(1.0, 0, 1), Event::new(0.5, 1, 0)], 2.0, 2).unwrap();
        assert_eq!(list.events()[0], Event::new(0.5, 0, 1));
        assert_eq!(list.events()[1], Event::new(1.0, 0, 1));
    }

    #[test]
    fn event_list_rejects_bad_events() {
        assert!(EventList::new(vec![Event::new(1.0, 2, 2)], 2.0, 3).is_err());
        assert!(EventList::new(vec![Event::new(3.0, 0, 1)], 2.0, 3).is_err());
        assert!(EventList::new(vec![Event::new(1.0, 0, 5)], 2.0, 3).is_err());
        assert!(EventList::new(vec![], 0.0, 3).is_err());
    }

    #[test]
    fn events_by_dyad_examples() {
        let empty = EventList::empty(1.0, 3).unwrap();
        assert!(events_by_dyad(&empty).is_empty());

        let merged = EventList::new(vec![Event::new(1.0, 0, 1), Event::new(2.0, 1, 0)], 2.0, 2).unwrap();
        let map = events_by_dyad(&merged);
        assert_eq!(map.len(), 1);
        assert_eq!(map[&(0, 1)], vec![1.0, 2.0]);

        let split = EventList::new(vec![Event::new(1.0, 0, 1), Event::new(1.0, 0, 2)], 2.0, 3).unwrap();
        let map = events_by_dyad(&split);
        assert_eq!(map.len(), 2);
        assert_eq!(map[&(0, 1)], vec![1.0]);
        assert_eq!(map[&(0, 2)], vec![1.0]);
    }

    #[test]
    fn projection_state_requires_positive_coordinates() {
        let traj = TrajectorySet::from_nested(&[vec![vec![1.0, 0.0], vec![1.0, 1.0]]]).unwrap();
        assert!(ModelState::projection(traj.clone()).is_err());
        let state = ModelState::distance(traj, 0.5).unwrap();
        assert!(matches!(
            state.expect_variant(Variant::Projection),
            Err(ClpmError::VariantMismatch { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interpolation_is_affine_within_a_segment(
                lo in prop::collection::vec(-5.0f64..5.0, 2),
                hi in prop::collection::vec(-5.0f64..5.0, 2),
                t1 in 2.0f64..6.0,
                t2 in 2.0f64..6.0,
                alpha in 0.0f64..1.0,
            ) {
                let grid = ChangePointGrid::new(vec![0.0, 2.0, 6.0]).unwrap();
                let traj = TrajectorySet::from_nested(&[vec![vec![0.0, 0.0], lo, hi]]).unwrap();
                let p1 = interpolate(&traj, &grid, 0, t1).unwrap();
                let p2 = interpolate(&traj, &grid, 0, t2).unwrap();
                let pm = interpolate(&traj, &grid, 0, alpha * t1 + (1.0 - alpha) * t2).unwrap();
                for c in 0..2 {
                    let expected = alpha * p1[c] + (1.0 - alpha) * p2[c];
                    let scale = expected.abs().max(1.0);
                    prop_assert!((pm[c] - expected).abs() <= 1e-12 * scale);
                }
            }

            #[test]
            fn dyad_partition_preserves_count(
                raw in prop::collection::vec((0.0f64..10.0, 0usize..6, 0usize..6), 0..60)
            ) {
                let events: Vec<Event> = raw
                    .into_iter()
                    .filter(|(_, a, b)| a != b)
                    .map(|(t, a, b)| Event::new(t, a, b))
                    .collect();
                let total = events.len();
                let list = EventList::new(events, 10.0, 6).unwrap();
                let map = events_by_dyad(&list);
                prop_assert_eq!(map.values().map(Vec::len).sum::<usize>(), total);
                prop_assert!(list.events().windows(2).all(|w| w[0].time <= w[1].time));
            }
        }
    }
}
