use clpm::generators::{make_ring_trajectories, make_sim1_schedule, simulate_blockmodel_dyad, simulate_clpm};
use clpm::oracle::{adaptive_quadrature, direct_rate};
use clpm::{ChangePointGrid, ModelState, TrajectorySet};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

const REPLICATES: u64 = 10_000;

/// Counts of dyad `(i, j)` in segment `s` of the first blockmodel scenario,
/// one per seed.
fn sim1_counts(i: usize, j: usize, s: usize) -> Vec<u64> {
    let schedule = make_sim1_schedule();
    let (lo, hi) = (schedule.segment_bounds[s], schedule.segment_bounds[s + 1]);
    (0..REPLICATES)
        .map(|seed| {
            simulate_blockmodel_dyad(&schedule, seed, i, j)
                .unwrap()
                .into_iter()
                .filter(|&t| t >= lo && t < hi)
                .count() as u64
        })
        .collect()
}

/// Pearson goodness-of-fit p-value of `counts` against Poisson(`mean`).
/// Adjacent counts are pooled greedily so that every bin expects at least
/// 5 observations; the last bin is the open upper tail.
fn poisson_gof_p_value(counts: &[u64], mean: f64) -> f64 {
    let n = counts.len() as f64;
    let pois = Poisson::new(mean).unwrap();
    let mut bins: Vec<(u64, u64, f64)> = Vec::new();
    let (mut lo, mut acc, mut used) = (0u64, 0.0, 0.0);
    let kmax = (mean + 10.0 * mean.sqrt() + 10.0) as u64;
    for k in 0..=kmax {
        acc += pois.pmf(k);
        if n * acc >= 5.0 && n * (1.0 - used - acc) >= 5.0 {
            bins.push((lo, k, acc));
            used += acc;
            lo = k + 1;
            acc = 0.0;
        }
    }
    bins.push((lo, u64::MAX, 1.0 - used));
    let stat: f64 = bins
        .iter()
        .map(|&(lo, hi, p)| {
            let observed = counts.iter().filter(|&&c| c >= lo && c <= hi).count() as f64;
            (observed - n * p).powi(2) / (n * p)
        })
        .sum();
    let df = (bins.len() - 1) as f64;
    assert!(df >= 1.0);
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn strong_community_dyad_has_mean_ten() {
    let counts = sim1_counts(3, 7, 1);
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    assert!((mean - 10.0).abs() <= 0.3, "mean {mean}");
}

#[test]
fn blockmodel_counts_are_poisson() {
    // (dyad, segment, scheduled mean): one cell per community rate, plus the hub
    let cells = [
        ((3, 7), 1, 10.0),
        ((22, 31), 1, 5.0),
        ((3, 47), 1, 1.0),
        ((0, 33), 3, 10.0),
    ];
    for ((i, j), s, mean) in cells {
        let p = poisson_gof_p_value(&sim1_counts(i, j, s), mean);
        assert!(p > 0.01, "dyad ({i}, {j}) segment {s}: p = {p}");
    }
}

#[test]
fn isolated_node_counts_are_poisson() {
    let counts = sim1_counts(12, 59, 0);
    let zero = counts.iter().filter(|&&c| c == 0).count() as f64;
    let n = counts.len() as f64;
    let p0 = (-0.01f64).exp();
    let stat = (zero - n * p0).powi(2) / (n * p0) + ((n - zero) - n * (1.0 - p0)).powi(2) / (n * (1.0 - p0));
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(stat);
    assert!(p > 0.01, "p = {p}");
}

/// Kolmogorov–Smirnov distance between the sample and Exp(1).
fn ks_unit_exponential(mut gaps: Vec<f64>) -> f64 {
    gaps.sort_by(f64::total_cmp);
    let m = gaps.len() as f64;
    gaps.iter()
        .enumerate()
        .map(|(k, &g)| {
            let cdf = 1.0 - (-g).exp();
            (cdf - k as f64 / m).max((k as f64 + 1.0) / m - cdf)
        })
        .fold(0.0, f64::max)
}

/// Rescales the events of dyad `(i, j)` by the integrated rate, laying
/// replicates end to end, until at least `target` gaps are collected.
fn rescaled_gaps(state: &ModelState, grid: &ChangePointGrid, i: usize, j: usize, target: usize) -> Vec<f64> {
    let cumulative = |t: f64| adaptive_quadrature(|s| direct_rate(state, grid, i, j, s), 0.0, t, 1e-12);
    let total = cumulative(grid.horizon());
    let mut gaps = Vec::new();
    let mut prev = 0.0;
    let mut seed = 0;
    while gaps.len() < target {
        let events = simulate_clpm(state, grid, seed).unwrap();
        let offset = seed as f64 * total;
        for e in events.iter().filter(|e| e.dyad() == (i, j)) {
            let s = offset + cumulative(e.time);
            gaps.push(s - prev);
            prev = s;
        }
        seed += 1;
    }
    gaps
}

/// Asymptotic 1% critical value of `√n · D`.
const KS_CRITICAL_1PCT: f64 = 1.6276;

#[test]
fn distance_sampler_passes_time_rescaling() {
    let (traj, grid) = make_ring_trajectories(4, 1.0, 5.0).unwrap();
    let state = ModelState::distance(traj, 3.0).unwrap();
    for (i, j) in [(0, 1), (0, 2)] {
        let gaps = rescaled_gaps(&state, &grid, i, j, 5000);
        let d = ks_unit_exponential(gaps.clone());
        let scaled = (gaps.len() as f64).sqrt() * d;
        assert!(scaled < KS_CRITICAL_1PCT, "dyad ({i}, {j}): sqrt(n) D = {scaled}");
    }
}

#[test]
fn projection_sampler_passes_time_rescaling() {
    let traj = TrajectorySet::from_nested(&[
        vec![vec![2.0, 0.1], vec![0.1, 2.0], vec![1.5, 1.5]],
        vec![vec![1.5, 0.2], vec![1.8, 0.3], vec![0.2, 2.5]],
    ])
    .unwrap();
    let grid = ChangePointGrid::new(vec![0.0, 1.5, 4.0]).unwrap();
    let state = ModelState::projection(traj).unwrap();
    let gaps = rescaled_gaps(&state, &grid, 0, 1, 5000);
    let scaled = (gaps.len() as f64).sqrt() * ks_unit_exponential(gaps);
    assert!(scaled < KS_CRITICAL_1PCT, "sqrt(n) D = {scaled}");
}

#[test]
fn constant_rate_count_mean() {
    let grid = ChangePointGrid::new(vec![0.0, 10.0]).unwrap();
    let traj = TrajectorySet::from_nested(&[vec![vec![1.0, 2.0]; 2], vec![vec![1.0, 2.0]; 2]]).unwrap();
    let state = ModelState::distance(traj, 5.0f64.ln()).unwrap();
    let total: usize = (0..REPLICATES)
        .map(|s| simulate_clpm(&state, &grid, s).unwrap().len())
        .sum();
    let mean = total as f64 / REPLICATES as f64;
    assert!((mean - 50.0).abs() <= 0.5, "mean {mean}");
}
