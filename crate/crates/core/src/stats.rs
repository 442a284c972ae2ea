//! Small numerical helpers shared across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn invlogit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `log(1 + exp(x))` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Quantile with linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 2.5% and 97.5% quantiles of an unsorted sample.
pub fn central_interval(xs: &[f64]) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975))
}

/// One-sample Kolmogorov–Smirnov test against Uniform(0, 1).
/// Returns `(D, p-value)` using the asymptotic Kolmogorov distribution with
/// the Stephens small-sample correction.
pub fn ks_uniform(sample: &[f64]) -> (f64, f64) {
    let n = sample.len();
    assert!(n > 0, "KS test on empty sample");
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            let above = (i + 1) as f64 / nf - x;
            let below = x - i as f64 / nf;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_survival(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-squared test that `counts` are equally likely.
/// Returns `(statistic, p-value)`.
pub fn chi_squared_uniform(counts: &[u64]) -> (f64, f64) {
    let k = counts.len();
    assert!(k >= 2, "need at least two bins");
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum::<f64>();
    let dist = ChiSquared::new((k - 1) as f64).expect("valid degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logit_roundtrip() {
        for &p in &[1e-9, 0.1, 0.5, 0.77, 1.0 - 1e-9] {
            assert_abs_diff_eq!(invlogit(logit(p)), p, epsilon = 1e-12);
        }
        assert_eq!(invlogit(-800.0), 0.0);
        assert_eq!(invlogit(800.0), 1.0);
    }

    #[test]
    fn choose() {
        assert_abs_diff_eq!(ln_choose(2, 1), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ln_choose(10, 3), 120f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(ln_choose(7, 0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.1), 1.4, epsilon = 1e-12);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
    }

    #[test]
    fn ks_accepts_grid_and_rejects_clump() {
        let grid: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        assert!(ks_uniform(&grid).1 > 0.99);
        let clump: Vec<f64> = (0..200).map(|i| 0.8 + 0.2 * i as f64 / 200.0).collect();
        assert!(ks_uniform(&clump).1 < 1e-6);
    }

    #[test]
    fn kolmogorov_reference_value() {
        // P(K > 1.36) is the classical 5% point
        assert_abs_diff_eq!(kolmogorov_survival(1.358), 0.05, epsilon = 5e-4);
    }

    #[test]
    fn chi_squared_flat_counts() {
        let (stat, p) = chi_squared_uniform(&[10, 10, 10, 10]);
        assert_eq!(stat, 0.0);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        let (_, p) = chi_squared_uniform(&[40, 0, 0, 0]);
        assert!(p < 1e-10);
    }
}
