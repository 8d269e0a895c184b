//! Goodness-of-fit statistics against fully specified normal laws.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Upper critical values of the Anderson–Darling statistic when the
/// reference distribution is fully specified (no estimated parameters).
const AD_CRITICAL: [(f64, f64); 4] = [(0.10, 1.933), (0.05, 2.492), (0.025, 3.070), (0.01, 3.857)];

/// Absolute tolerance used when the reference variance is zero.
pub const DEGENERATE_TOL: f64 = 1e-9;

pub fn anderson_darling_critical(alpha: f64) -> Result<f64> {
    AD_CRITICAL
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|(_, c)| *c)
        .ok_or_else(|| {
            Error::input(format!(
                "no Anderson-Darling critical value for alpha = {alpha}"
            ))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    /// `A²`, or `max |s - μ|` in the degenerate case.
    pub statistic: f64,
    pub critical: f64,
    pub alpha: f64,
    pub degenerate: bool,
    pub passed: bool,
}

/// Anderson–Darling test of `samples` against `N(mu, sigma2)`.
///
/// With `sigma2 = 0` the test degenerates to `max |s - mu| ≤ 1e-9·(1 + |mu|)`.
pub fn normality_test(
    samples: &[f64],
    mu: f64,
    sigma2: f64,
    alpha: f64,
) -> Result<NormalityResult> {
    if samples.is_empty() {
        return Err(Error::input("normality test on an empty sample"));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::input(format!("variance must be >= 0, got {sigma2}")));
    }
    let critical = anderson_darling_critical(alpha)?;
    if sigma2 == 0.0 {
        let dev = samples.iter().map(|s| (s - mu).abs()).fold(0.0, f64::max);
        let tol = DEGENERATE_TOL * (1.0 + mu.abs());
        return Ok(NormalityResult {
            statistic: dev,
            critical: tol,
            alpha,
            degenerate: true,
            passed: dev <= tol,
        });
    }
    let a2 = anderson_darling(samples, mu, sigma2.sqrt());
    Ok(NormalityResult {
        statistic: a2,
        critical,
        alpha,
        degenerate: false,
        passed: a2 <= critical,
    })
}

/// `A² = -n - (1/n) Σ (2i - 1) [ln Φ(z_(i)) + ln(1 - Φ(z_(n+1-i)))]`.
pub fn anderson_darling(samples: &[f64], mu: f64, sigma: f64) -> f64 {
    let std = Normal::standard();
    let mut z: Vec<f64> = samples.iter().map(|s| (s - mu) / sigma).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let floor = f64::MIN_POSITIVE;
    let s: f64 = (0..n)
        .map(|i| {
            let lo = std.cdf(z[i]).max(floor).ln();
            // 1 - Φ(z) = Φ(-z), accurate in the upper tail
            let hi = std.cdf(-z[n - 1 - i]).max(floor).ln();
            (2 * i + 1) as f64 * (lo + hi)
        })
        .sum();
    -(n as f64) - s / n as f64
}

/// `sup_x |F_n(x) - Φ((x - mu)/sigma)|`.
///
/// With `sigma = 0` the reference is the point mass at `mu`; samples within
/// `1e-9·(1 + |mu|)` of `mu` count as equal to it.
pub fn ks_distance_normal(samples: &[f64], mu: f64, sigma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("KS distance of an empty sample"));
    }
    let n = samples.len() as f64;
    if sigma == 0.0 {
        let tol = DEGENERATE_TOL * (1.0 + mu.abs());
        let below = samples.iter().filter(|s| **s < mu - tol).count() as f64;
        let above = samples.iter().filter(|s| **s > mu + tol).count() as f64;
        return Ok((below / n).max(above / n));
    }
    if !(sigma > 0.0) {
        return Err(Error::input(format!("sigma must be >= 0, got {sigma}")));
    }
    let dist = Normal::new(mu, sigma).map_err(|e| Error::input(e.to_string()))?;
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| {
            let f = dist.cdf(*v);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max))
}
