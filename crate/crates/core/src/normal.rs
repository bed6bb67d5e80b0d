//! Standard normal distribution function, its inverse, and the
//! Kolmogorov-Smirnov distance to it.

use crate::error::{Error, Result};

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Inverse standard normal CDF; infinite at 0 and 1, NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    standard().inverse_cdf(p)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `values` and the
/// standard normal CDF. The input need not be sorted.
pub fn ks_statistic(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::CrossCheck("non-finite value passed to the KS statistic".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    Ok(sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal_cdf(x);
        d.max((i + 1) as f64 / m - f).max(f - i as f64 / m)
    }))
}

/// Critical value of the KS statistic at level 1% for large samples.
pub fn ks_critical_1pct(m: usize) -> f64 {
    1.63 / (m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

    /// `Phi(x) = 1/2 + phi(x) sum_k x^(2k+1) / (1*3*...*(2k+1))`, summed until
    /// terms vanish. Converges for every x; accurate in double for |x| <= 6.
    fn series_cdf(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            term *= x * x / (2.0 * k + 1.0);
            sum += term;
            k += 1.0;
        }
        0.5 + (-0.5 * x * x).exp() / SQRT_2PI * sum
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if series_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_symmetry_point() {
        assert_eq!(normal_cdf(0.0), 0.5);
    }

    #[test]
    fn cdf_matches_series() {
        let mut x = -6.0;
        while x <= 6.0 {
            assert!((normal_cdf(x) - series_cdf(x)).abs() < 1e-7, "x = {x}");
            x += 0.01;
        }
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(1.959964) - series_cdf(1.959964)).abs() < 1e-10);
    }

    #[test]
    fn cdf_far_tails() {
        assert!(normal_cdf(-40.0) == 0.0 && normal_cdf(40.0) == 1.0);
        assert!(normal_cdf(-8.0) > 0.0 && normal_cdf(-8.0) < 1e-14);
    }

    #[test]
    fn quantile_matches_bisection() {
        for &p in &[1e-6, 0.001, 0.01, 0.024, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.976, 0.99, 0.999] {
            let q = normal_quantile(p);
            assert!((q - bisect_quantile(p)).abs() < 1e-8, "p = {p}");
        }
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn ks_of_stratified_quantiles() {
        let m = 500;
        let v: Vec<f64> = (1..=m).map(|i| normal_quantile((i as f64 - 0.5) / m as f64)).collect();
        assert!(ks_statistic(&v).unwrap() <= 0.5 / m as f64 + 1e-9);
    }

    #[test]
    fn ks_edge_cases() {
        assert!(ks_statistic(&[]).is_err());
        assert!(ks_statistic(&[f64::NAN]).is_err());
        // single point at 0: empirical jumps 0 -> 1 where Phi = 0.5
        assert!((ks_statistic(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
        // shifted sample is far from N(0,1)
        let v: Vec<f64> = (1..=200).map(|i| 3.0 + normal_quantile((i as f64 - 0.5) / 200.0)).collect();
        assert!(ks_statistic(&v).unwrap() > 0.8);
    }
}
