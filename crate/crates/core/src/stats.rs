//! Replication statistics used by the Monte Carlo harness.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    let (m2, m3, m4) = xs.iter().fold((0.0, 0.0, 0.0), |(a, b, c), x| {
        let d = x - m;
        let d2 = d * d;
        (a + d2, b + d2 * d, c + d2 * d2)
    });
    (m2 / n, m3 / n, m4 / n)
}

/// Sample skewness `m₃ / m₂^{3/2}`.
pub fn skewness(xs: &[f64]) -> f64 {
    let (m2, m3, _) = central_moments(xs);
    if m2 == 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Sample excess kurtosis `m₄ / m₂² − 3`.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let (m2, _, m4) = central_moments(xs);
    if m2 == 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

/// Standard error of the sample skewness under normality.
pub fn skewness_se(n: usize) -> f64 {
    let n = n as f64;
    (6.0 * (n - 2.0) / ((n + 1.0) * (n + 3.0))).sqrt()
}

/// Standard error of the sample excess kurtosis under normality.
pub fn kurtosis_se(n: usize) -> f64 {
    let n = n as f64;
    2.0 * skewness_se(n as usize) * ((n * n - 1.0) / ((n - 3.0) * (n + 5.0))).sqrt()
}

/// Max distance between the empirical CDF of the studentized sample and `Φ`.
pub fn ks_distance_studentized(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sd = variance(xs).sqrt();
    if sd == 0.0 {
        return 1.0;
    }
    let normal = Normal::standard();
    let mut z: Vec<f64> = xs.iter().map(|x| (x - m) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = z.len() as f64;
    z.iter().enumerate().fold(0.0_f64, |d, (i, zi)| {
        let f = normal.cdf(*zi);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d.max((f - lo).abs()).max((hi - f).abs())
    })
}

/// Large-sample 1% critical value of the Kolmogorov–Smirnov distance.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Straight-line fit `y = a + b·x` with the slope's standard error
/// propagated from per-point standard errors of `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn fit_slope(x: &[f64], y: &[f64], y_se: &[f64]) -> SlopeFit {
    let xm = mean(x);
    let ym = mean(y);
    let sxx: f64 = x.iter().map(|xi| (xi - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - xm) * (yi - ym)).sum();
    let slope = sxy / sxx;
    let var: f64 = x.iter().zip(y_se).map(|(xi, s)| ((xi - xm) / sxx).powi(2) * s * s).sum();
    let se = var.sqrt();
    SlopeFit {
        slope,
        intercept: ym - slope * xm,
        slope_se: se,
        ci_low: slope - 1.96 * se,
        ci_high: slope + 1.96 * se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(skewness(&xs), 0.0);
        // m2 = 1.25, m4 = 2.5625
        assert!((excess_kurtosis(&xs) - (2.5625 / 1.5625 - 3.0)).abs() < 1e-14);
        assert!((skewness(&[0.0, 0.0, 3.0]) - (2.0 / 2.0_f64.powf(1.5))).abs() < 1e-14);
    }

    #[test]
    fn skew_kurt_se_large_n() {
        assert!((skewness_se(10_000) - (6.0_f64 / 10_000.0).sqrt()).abs() < 1e-4);
        assert!((kurtosis_se(10_000) - (24.0_f64 / 10_000.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn ks_on_normal_quantiles_is_small() {
        let normal = Normal::standard();
        let n = 400;
        let xs: Vec<f64> = (0..n).map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        assert!(ks_distance_studentized(&xs) < ks_critical_1pct(n));
        let skewed: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64).powi(6)).collect();
        assert!(ks_distance_studentized(&skewed) > ks_critical_1pct(n));
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 0.5, 0.0];
        let f = fit_slope(&x, &y, &[0.1, 0.1, 0.1]);
        assert!((f.slope + 0.5).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        // Var(b) = σ² / Sxx = 0.01 / 2
        assert!((f.slope_se - (0.005_f64).sqrt()).abs() < 1e-15);
    }
}
