//! Projection variant: the interaction rate of a dyad is the dot product of
//! the two latent positions.
//!
//! Along a segment both positions are affine in the local coordinate, so the
//! dot product is a quadratic in it and its integral only needs the four dot
//! products between the segment endpoints.

use crate::error::{ClpmError, Result};
use crate::trajectories::{ChangePointGrid, EventList, ModelState, TrajectorySet, Variant};

/// Floor applied to rates before taking logarithms.
pub const RATE_FLOOR: f64 = 1e-12;

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Dot products `S^{gh} = ⟨z_i(η_g), z_j(η_h)⟩` for one dyad over all knot
/// pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct DotProductTable {
    num_knots: usize,
    values: Vec<f64>,
}

impl DotProductTable {
    pub fn new(trajectories: &TrajectorySet, i: usize, j: usize) -> Self {
        let k = trajectories.num_knots();
        let mut values = Vec::with_capacity(k * k);
        for g in 0..k {
            for h in 0..k {
                values.push(dot(trajectories.knot(i, g), trajectories.knot(j, h)));
            }
        }
        DotProductTable { num_knots: k, values }
    }

    pub fn get(&self, g: usize, h: usize) -> f64 {
        self.values[g * self.num_knots + h]
    }

    /// `Σ_g (η_{g+1} − η_g)(2S^{gg} + S^{gh} + S^{hg} + 2S^{hh})/6`, h = g+1.
    pub fn integral(&self, grid: &ChangePointGrid) -> f64 {
        (0..grid.num_segments())
            .map(|g| {
                let h = g + 1;
                grid.segment_len(g) * (2.0 * self.get(g, g) + self.get(g, h) + self.get(h, g) + 2.0 * self.get(h, h))
                    / 6.0
            })
            .sum()
    }
}

/// Exact integral of the dot-product rate of dyad `(i, j)` over `[0, T]`,
/// computed segment by segment without building the full table.
pub(crate) fn dyad_integral(traj: &TrajectorySet, grid: &ChangePointGrid, i: usize, j: usize) -> f64 {
    let mut total = 0.0;
    for g in 0..grid.num_segments() {
        let (zi0, zi1) = (traj.knot(i, g), traj.knot(i, g + 1));
        let (zj0, zj1) = (traj.knot(j, g), traj.knot(j, g + 1));
        let s = 2.0 * dot(zi0, zj0) + dot(zi0, zj1) + dot(zi1, zj0) + 2.0 * dot(zi1, zj1);
        total += grid.segment_len(g) * s / 6.0;
    }
    total
}

/// Adds `weight · ∂(integral)/∂z` for dyad `(i, j)` to `grad` (laid out like
/// the trajectory data).
pub(crate) fn dyad_integral_grad(
    traj: &TrajectorySet,
    grid: &ChangePointGrid,
    i: usize,
    j: usize,
    weight: f64,
    grad: &mut [f64],
) {
    let d = traj.dim();
    for g in 0..grid.num_segments() {
        let c = weight * grid.segment_len(g) / 6.0;
        let (oi0, oi1) = (traj.offset(i, g), traj.offset(i, g + 1));
        let (oj0, oj1) = (traj.offset(j, g), traj.offset(j, g + 1));
        let data = traj.as_slice();
        for k in 0..d {
            let (zi0, zi1) = (data[oi0 + k], data[oi1 + k]);
            let (zj0, zj1) = (data[oj0 + k], data[oj1 + k]);
            grad[oi0 + k] += c * (2.0 * zj0 + zj1);
            grad[oi1 + k] += c * (zj0 + 2.0 * zj1);
            grad[oj0 + k] += c * (2.0 * zi0 + zi1);
            grad[oj1 + k] += c * (zi0 + 2.0 * zi1);
        }
    }
}

/// `λ_ij(t) = ⟨z_i(t), z_j(t)⟩`.
pub fn projection_rate(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize, t: f64) -> Result<f64> {
    state.expect_variant(Variant::Projection)?;
    let traj = state.trajectories();
    traj.check_grid(grid)?;
    let g = grid.locate_segment(t)?;
    let u = grid.local_coordinate(g, t);
    let mut zi = vec![0.0; traj.dim()];
    let mut zj = vec![0.0; traj.dim()];
    traj.position_in_segment(i, g, u, &mut zi);
    traj.position_in_segment(j, g, u, &mut zj);
    Ok(dot(&zi, &zj))
}

/// `∫_0^T ⟨z_i(s), z_j(s)⟩ ds`, exact.
pub fn projection_integral(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize) -> Result<f64> {
    state.expect_variant(Variant::Projection)?;
    state.trajectories().check_grid(grid)?;
    Ok(dyad_integral(state.trajectories(), grid, i, j))
}

/// An event whose rate fell below [`RATE_FLOOR`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlooredEvent {
    pub i: usize,
    pub j: usize,
    pub time: f64,
    pub rate: f64,
}

/// Log-likelihood with floored logarithms, returning every event that hit
/// the floor alongside the value.
pub fn projection_loglik_with_diagnostics(
    state: &ModelState,
    grid: &ChangePointGrid,
    events: &EventList,
) -> Result<(f64, Vec<FlooredEvent>)> {
    state.expect_variant(Variant::Projection)?;
    let traj = state.trajectories();
    traj.check_grid(grid)?;
    let n = traj.num_nodes();
    if events.num_nodes() > n {
        return Err(ClpmError::Domain(format!(
            "event list has {} nodes but the state only {n}",
            events.num_nodes()
        )));
    }
    let d = traj.dim();
    let mut zi = vec![0.0; d];
    let mut zj = vec![0.0; d];
    let mut floored = Vec::new();
    let mut event_term = 0.0;
    for e in events.iter() {
        let g = grid.locate_segment(e.time)?;
        let u = grid.local_coordinate(g, e.time);
        traj.position_in_segment(e.a, g, u, &mut zi);
        traj.position_in_segment(e.b, g, u, &mut zj);
        let rate = dot(&zi, &zj);
        if rate <= RATE_FLOOR {
            floored.push(FlooredEvent {
                i: e.a,
                j: e.b,
                time: e.time,
                rate,
            });
        }
        event_term += rate.max(RATE_FLOOR).ln();
    }
    let mut integral = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            integral += dyad_integral(traj, grid, i, j);
        }
    }
    Ok((event_term - integral, floored))
}

/// `Σ_{i<j} [Σ_e log ⟨z_i(τ_e), z_j(τ_e)⟩ − ∫ ⟨z_i, z_j⟩]`.
///
/// Fails with [`ClpmError::DegenerateRate`] naming the first event whose
/// rate is at or below [`RATE_FLOOR`].
pub fn projection_loglik(state: &ModelState, grid: &ChangePointGrid, events: &EventList) -> Result<f64> {
    let (value, floored) = projection_loglik_with_diagnostics(state, grid, events)?;
    if let Some(f) = floored.first() {
        return Err(ClpmError::DegenerateRate {
            i: f.i,
            j: f.j,
            t: f.time,
            rate: f.rate,
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectories::Event;

    fn static_state(points: &[[f64; 2]], num_knots: usize) -> ModelState {
        let nested: Vec<Vec<Vec<f64>>> = points.iter().map(|p| vec![p.to_vec(); num_knots]).collect();
        ModelState::projection(TrajectorySet::from_nested(&nested).unwrap()).unwrap()
    }

    #[test]
    fn rate_examples() {
        let grid = ChangePointGrid::new(vec![0.0, 1.0]).unwrap();
        // (1, 0) and (0, 1) are not strictly positive; go through a tiny epsilon
        let eps = 1e-300;
        let s = static_state(&[[1.0, eps], [eps, 1.0]], 2);
        assert!(projection_rate(&s, &grid, 0, 1, 0.5).unwrap() < 1e-290);
        let s = static_state(&[[1.0, 1.0], [1.0, 1.0]], 2);
        assert_eq!(projection_rate(&s, &grid, 0, 1, 0.3).unwrap(), 2.0);
        let s = static_state(&[[2.0, eps], [3.0, eps]], 2);
        for t in [0.0, 0.25, 1.0] {
            assert_eq!(projection_rate(&s, &grid, 0, 1, t).unwrap(), 6.0);
        }
    }

    #[test]
    fn rate_rejects_distance_state() {
        let grid = ChangePointGrid::new(vec![0.0, 1.0]).unwrap();
        let traj = TrajectorySet::zeros(2, 2, 2).unwrap();
        let state = ModelState::distance(traj, 0.0).unwrap();
        assert!(matches!(
            projection_rate(&state, &grid, 0, 1, 0.5),
            Err(ClpmError::VariantMismatch { .. })
        ));
        assert!(projection_integral(&state, &grid, 0, 1).is_err());
    }

    #[test]
    fn integral_of_static_pair_is_length_times_rate() {
        let grid = ChangePointGrid::new(vec![0.0, 2.5]).unwrap();
        let s = static_state(&[[1.0, 2.0], [0.5, 3.0]], 2);
        assert!((projection_integral(&s, &grid, 0, 1).unwrap() - 2.5 * 6.5).abs() < 1e-12);
    }

    #[test]
    fn rotating_node_integral_table() {
        // z_i: (1,0) → (0,1), z_j = (1,0); coordinates nudged into the open orthant
        let e = 1e-300;
        let traj =
            TrajectorySet::from_nested(&[vec![vec![1.0, e], vec![e, 1.0]], vec![vec![1.0, e], vec![1.0, e]]]).unwrap();
        let grid = ChangePointGrid::new(vec![0.0, 1.0]).unwrap();
        let table = DotProductTable::new(&traj, 0, 1);
        assert_eq!(table.get(0, 0), 1.0);
        assert_eq!(table.get(0, 1), 1.0);
        assert!(table.get(1, 0) < 1e-290);
        assert!(table.get(1, 1) < 1e-290);
        assert!((table.integral(&grid) - 0.5).abs() < 1e-15);
        let state = ModelState::projection(traj).unwrap();
        assert!((projection_integral(&state, &grid, 0, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loglik_examples() {
        let grid = ChangePointGrid::new(vec![0.0, 1.0]).unwrap();
        let s = static_state(&[[1.0, 1.0], [1.0, 1.0]], 2);
        let none = EventList::empty(1.0, 2).unwrap();
        assert!((projection_loglik(&s, &grid, &none).unwrap() + 2.0).abs() < 1e-15);
        let one = EventList::new(vec![Event::new(0.4, 1, 0)], 1.0, 2).unwrap();
        let expected = 2f64.ln() - 2.0;
        assert!((projection_loglik(&s, &grid, &one).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rate_is_reported() {
        let grid = ChangePointGrid::new(vec![0.0, 1.0]).unwrap();
        let e = 1e-300;
        let s = static_state(&[[1.0, e], [e, 1.0]], 2);
        let one = EventList::new(vec![Event::new(0.5, 0, 1)], 1.0, 2).unwrap();
        match projection_loglik(&s, &grid, &one) {
            Err(ClpmError::DegenerateRate { i, j, t, .. }) => {
                assert_eq!((i, j), (0, 1));
                assert_eq!(t, 0.5);
            }
            other => panic!("expected degenerate-rate error, got {other:?}"),
        }
        let (value, floored) = projection_loglik_with_diagnostics(&s, &grid, &one).unwrap();
        assert_eq!(floored.len(), 1);
        assert!(value.is_finite());
    }

    #[test]
    fn coordinate_permutation_leaves_loglik_unchanged() {
        let grid = ChangePointGrid::new(vec![0.0, 1.0, 3.0]).unwrap();
        let nested = vec![
            vec![vec![0.3, 1.2], vec![0.9, 0.4], vec![1.5, 0.2]],
            vec![vec![1.1, 0.7], vec![0.2, 0.6], vec![0.8, 1.9]],
            vec![vec![0.5, 0.5], vec![1.4, 1.0], vec![0.1, 0.3]],
        ];
        let swapped: Vec<Vec<Vec<f64>>> = nested
            .iter()
            .map(|node| node.iter().map(|p| vec![p[1], p[0]]).collect())
            .collect();
        let events = EventList::new(
            vec![
                Event::new(0.2, 0, 1),
                Event::new(1.7, 1, 2),
                Event::new(2.9, 0, 2),
                Event::new(3.0, 0, 1),
            ],
            3.0,
            3,
        )
        .unwrap();
        let a = ModelState::projection(TrajectorySet::from_nested(&nested).unwrap()).unwrap();
        let b = ModelState::projection(TrajectorySet::from_nested(&swapped).unwrap()).unwrap();
        let la = projection_loglik(&a, &grid, &events).unwrap();
        let lb = projection_loglik(&b, &grid, &events).unwrap();
        assert!((la - lb).abs() <= 1e-12 * la.abs());
    }
}
