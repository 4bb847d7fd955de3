use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clpm::oracle::{direct_loglik, direct_objective, quadrature_integral, random_instance, RandomInstance};
use clpm::{
    distance_integral, distance_loglik, node_term, objective, projection_integral, projection_loglik, ChangePointGrid,
    EventList, ModelState, PenaltyParams, TrajectorySet, Variant,
};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn instance(seed: u64, variant: Variant) -> RandomInstance {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), variant, 5, 6)
}

fn loglik(state: &ModelState, grid: &ChangePointGrid, events: &EventList) -> f64 {
    match state.variant() {
        Variant::Projection => projection_loglik(state, grid, events).unwrap(),
        Variant::Distance => distance_loglik(state, grid, events).unwrap(),
    }
}

fn map_positions(state: &ModelState, f: impl Fn(&[f64]) -> Vec<f64>) -> ModelState {
    let nested: Vec<Vec<Vec<f64>>> = state
        .trajectories()
        .to_nested()
        .iter()
        .map(|node| node.iter().map(|p| f(p)).collect())
        .collect();
    let (variant, _, beta) = state.clone().into_parts();
    ModelState::new(variant, TrajectorySet::from_nested(&nested).unwrap(), beta).unwrap()
}

#[test]
fn loglik_matches_direct_evaluation() {
    for variant in [Variant::Projection, Variant::Distance] {
        for seed in 0..100 {
            let inst = instance(seed, variant);
            let closed = loglik(&inst.state, &inst.grid, &inst.events);
            let direct = direct_loglik(&inst.state, &inst.grid, &inst.events);
            assert!(
                rel(closed, direct) < 1e-8,
                "{variant} seed {seed}: {closed} vs {direct}"
            );
        }
    }
}

#[test]
fn objective_matches_direct_evaluation() {
    let penalty = PenaltyParams::default();
    for variant in [Variant::Projection, Variant::Distance] {
        for seed in 0..100 {
            let inst = instance(1000 + seed, variant);
            let closed = objective(&inst.state, &inst.grid, &inst.events, &penalty).unwrap();
            let direct = direct_objective(&inst.state, &inst.grid, &inst.events, &penalty);
            assert!(
                rel(closed, direct) < 1e-8,
                "{variant} seed {seed}: {closed} vs {direct}"
            );
        }
    }
}

#[test]
fn three_segment_integrals_match_quadrature_tightly() {
    let grid = ChangePointGrid::new(vec![0.0, 1.3, 2.0, 4.5]).unwrap();
    let nested = vec![
        vec![vec![0.4, 1.2], vec![1.7, 0.3], vec![0.9, 0.9], vec![0.2, 1.9]],
        vec![vec![1.1, 0.6], vec![0.5, 0.5], vec![1.4, 1.8], vec![0.7, 0.1]],
    ];
    let traj = TrajectorySet::from_nested(&nested).unwrap();
    let proj = ModelState::projection(traj.clone()).unwrap();
    let dist = ModelState::distance(traj, 0.4).unwrap();
    let p = projection_integral(&proj, &grid, 0, 1).unwrap();
    assert!(rel(p, quadrature_integral(&proj, &grid, 0, 1)) < 1e-10);
    let d = distance_integral(&dist, &grid, 0, 1).unwrap();
    assert!(rel(d, quadrature_integral(&dist, &grid, 0, 1)) < 1e-10);
}

#[test]
fn objective_is_sum_of_node_terms() {
    let penalty = PenaltyParams::default();
    for variant in [Variant::Projection, Variant::Distance] {
        for seed in 0..50 {
            let inst = instance(2000 + seed, variant);
            let total = objective(&inst.state, &inst.grid, &inst.events, &penalty).unwrap();
            let sum: f64 = (0..inst.state.num_nodes())
                .map(|i| {
                    node_term(&inst.state, &inst.grid, &inst.events, &penalty, i)
                        .unwrap()
                        .value
                })
                .sum();
            assert!(rel(total, sum) < 1e-12, "{variant} seed {seed}: {total} vs {sum}");
        }
    }
}

#[test]
fn loglik_is_sum_of_dyad_contributions_in_any_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for variant in [Variant::Projection, Variant::Distance] {
        for seed in 0..30 {
            let inst = instance(3000 + seed, variant);
            let n = inst.state.num_nodes();
            let mut dyads: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
            dyads.shuffle(&mut rng);
            let contribution = |i: usize, j: usize| -> f64 {
                let own: Vec<_> = inst.events.iter().filter(|e| e.dyad() == (i, j)).copied().collect();
                let sub = EventList::new(own, inst.events.horizon(), n).unwrap();
                let integral = match variant {
                    Variant::Projection => projection_integral(&inst.state, &inst.grid, i, j).unwrap(),
                    Variant::Distance => distance_integral(&inst.state, &inst.grid, i, j).unwrap(),
                };
                // loglik of a single-dyad event list still subtracts every integral
                let all: f64 = (0..n)
                    .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
                    .map(|(a, b)| match variant {
                        Variant::Projection => projection_integral(&inst.state, &inst.grid, a, b).unwrap(),
                        Variant::Distance => distance_integral(&inst.state, &inst.grid, a, b).unwrap(),
                    })
                    .sum();
                loglik(&inst.state, &inst.grid, &sub) + all - integral
            };
            let shuffled: f64 = dyads.iter().map(|&(i, j)| contribution(i, j)).sum();
            let whole = loglik(&inst.state, &inst.grid, &inst.events);
            assert!(rel(whole, shuffled) < 1e-10, "{variant} seed {seed}");
        }
    }
}

#[test]
fn beta_shift_identity() {
    for seed in 0..30 {
        let inst = instance(4000 + seed, Variant::Distance);
        let n = inst.state.num_nodes();
        let old: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| distance_integral(&inst.state, &inst.grid, i, j).unwrap())
            .collect();
        for delta in [-0.7, 0.25, 1.3] {
            let (_, traj, beta) = inst.state.clone().into_parts();
            let shifted = ModelState::distance(traj, beta + delta).unwrap();
            let change = distance_loglik(&shifted, &inst.grid, &inst.events).unwrap()
                - distance_loglik(&inst.state, &inst.grid, &inst.events).unwrap();
            let predicted = delta * inst.events.len() as f64 - old.iter().map(|v| (delta.exp() - 1.0) * v).sum::<f64>();
            assert!(
                (change - predicted).abs() <= 1e-10 * predicted.abs().max(1.0),
                "seed {seed} delta {delta}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_loglik_is_isometry_invariant(
        seed in any::<u64>(),
        angle in 0.0..std::f64::consts::TAU,
        reflect in any::<bool>(),
        shift in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let inst = instance(seed, Variant::Distance);
        let base = distance_loglik(&inst.state, &inst.grid, &inst.events).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let sign = if reflect { -1.0 } else { 1.0 };
        let moved = map_positions(&inst.state, |p| {
            vec![c * p[0] - s * sign * p[1] + shift[0], s * p[0] + c * sign * p[1] + shift[1]]
        });
        let after = distance_loglik(&moved, &inst.grid, &inst.events).unwrap();
        prop_assert!(rel(base, after) < 1e-10, "{base} vs {after}");
    }

    #[test]
    fn projection_loglik_is_invariant_under_coordinate_swaps(seed in any::<u64>()) {
        let inst = instance(seed, Variant::Projection);
        let base = projection_loglik(&inst.state, &inst.grid, &inst.events).unwrap();
        let swapped = map_positions(&inst.state, |p| vec![p[1], p[0]]);
        let after = projection_loglik(&swapped, &inst.grid, &inst.events).unwrap();
        prop_assert!(rel(base, after) < 1e-12, "{base} vs {after}");
    }

    #[test]
    fn integrals_match_quadrature(seed in any::<u64>(), distance in any::<bool>()) {
        let variant = if distance { Variant::Distance } else { Variant::Projection };
        let inst = instance(seed, variant);
        let n = inst.state.num_nodes();
        for i in 0..n {
            for j in (i + 1)..n {
                let closed = match variant {
                    Variant::Projection => projection_integral(&inst.state, &inst.grid, i, j).unwrap(),
                    Variant::Distance => distance_integral(&inst.state, &inst.grid, i, j).unwrap(),
                };
                let q = quadrature_integral(&inst.state, &inst.grid, i, j);
                prop_assert!(rel(closed, q) < 1e-8, "({i}, {j}): {closed} vs {q}");
            }
        }
    }
}
