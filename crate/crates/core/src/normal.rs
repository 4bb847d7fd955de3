//! Standard normal numerics and Gauss–Legendre rules.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Φ(x), evaluated through `erfc` so that the lower tail keeps full
/// relative precision.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Φ(hi) − Φ(lo) for `hi ≥ lo`. When both arguments sit in the same tail
/// the difference is taken between complementary values, which are small
/// and exact there.
pub fn normal_cdf_diff(hi: f64, lo: f64) -> f64 {
    if lo >= 0.0 {
        // upper tail: Φ(hi) − Φ(lo) = Q(lo) − Q(hi)
        0.5 * (libm::erfc(lo * FRAC_1_SQRT_2) - libm::erfc(hi * FRAC_1_SQRT_2))
    } else {
        0.5 * (libm::erfc(-hi * FRAC_1_SQRT_2) - libm::erfc(-lo * FRAC_1_SQRT_2))
    }
}

/// Log-density of the normal distribution with the given mean and variance
/// truncated to `[lo, hi]`, normalizing constant included. Points outside
/// the support return `-inf`.
pub fn truncated_normal_ln_pdf(x: f64, mean: f64, var: f64, lo: f64, hi: f64) -> f64 {
    if x < lo || x > hi {
        return f64::NEG_INFINITY;
    }
    let sd = var.sqrt();
    let z = (x - mean) / sd;
    let mass = normal_cdf_diff((hi - mean) / sd, (lo - mean) / sd);
    -0.5 * z * z - LN_SQRT_2PI - sd.ln() - mass.ln()
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

pub(crate) fn gl5() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_unit(5))
}

pub(crate) fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_unit(16))
}
