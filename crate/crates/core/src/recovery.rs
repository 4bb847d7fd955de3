//! Summaries for comparing fitted configurations with ground truth.
//! Latent positions are only identified up to rotation, reflection and
//! translation, so everything here works on distances.

use crate::error::{ClpmError, Result};
use crate::trajectories::{interpolate, ChangePointGrid, ModelState};

/// Positions of every node at time `t`.
pub fn positions_at(state: &ModelState, grid: &ChangePointGrid, t: f64) -> Result<Vec<Vec<f64>>> {
    (0..state.num_nodes())
        .map(|i| interpolate(state.trajectories(), grid, i, t))
        .collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Full symmetric matrix of pairwise Euclidean distances.
pub fn distance_matrix(positions: &[Vec<f64>]) -> Vec<Vec<f64>> {
    positions
        .iter()
        .map(|p| positions.iter().map(|q| euclidean(p, q)).collect())
        .collect()
}

/// Entries strictly above the diagonal, row by row.
pub fn upper_triangle(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter()
        .enumerate()
        .flat_map(|(i, row)| row[i + 1..].iter().copied())
        .collect()
}

/// Sample Pearson correlation. Errors when either input is constant or the
/// lengths differ.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(ClpmError::Domain(format!(
            "correlation needs two equal-length samples of size >= 2 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ClpmError::Domain("correlation of a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Pearson correlation of the pairwise distances of two configurations at
/// time `t`.
pub fn distance_correlation(
    truth: (&ModelState, &ChangePointGrid),
    fitted: (&ModelState, &ChangePointGrid),
    t: f64,
) -> Result<f64> {
    let a = upper_triangle(&distance_matrix(&positions_at(truth.0, truth.1, t)?));
    let b = upper_triangle(&distance_matrix(&positions_at(fitted.0, fitted.1, t)?));
    pearson(&a, &b)
}

pub fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points.first().map_or(0, Vec::len);
    let mut c = vec![0.0; dim];
    for p in points {
        for (ck, pk) in c.iter_mut().zip(p) {
            *ck += pk;
        }
    }
    let n = points.len().max(1) as f64;
    c.iter_mut().for_each(|x| *x /= n);
    c
}

/// Mean distance of the points from their centroid.
pub fn mean_radius(points: &[Vec<f64>]) -> f64 {
    let c = centroid(points);
    points.iter().map(|p| euclidean(p, &c)).sum::<f64>() / points.len().max(1) as f64
}

/// Mean of `m[i][j]` over `i` in `rows`, `j` in `cols`, `i ≠ j`.
pub fn mean_block_distance(m: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for &i in rows {
        for &j in cols {
            if i != j {
                total += m[i][j];
                count += 1;
            }
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        total / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        // hand-computed: deviations (−1.5,−.5,.5,1.5)·(−1,1,−1,1) = 2, norms √5·2
        let r = pearson(&x, &[0.0, 2.0, 0.0, 2.0]).unwrap();
        assert!((r - 2.0 / (5.0f64.sqrt() * 2.0)).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 4]).is_err());
        assert!(pearson(&x, &[1.0; 3]).is_err());
    }

    #[test]
    fn distances_and_radius() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let m = distance_matrix(&pts);
        assert_eq!(m[0][1], 2.0);
        assert!((m[0][2] - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(upper_triangle(&m).len(), 6);
        assert_eq!(centroid(&pts), vec![0.0, 0.0]);
        assert_eq!(mean_radius(&pts), 1.0);
        let shifted: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 3.0, p[1] - 7.0]).collect();
        assert!((mean_radius(&shifted) - 1.0).abs() < 1e-15);
        assert_eq!(mean_block_distance(&m, &[0], &[1]), 2.0);
        assert_eq!(mean_block_distance(&m, &[0, 1], &[0, 1]), 2.0);
    }
}
