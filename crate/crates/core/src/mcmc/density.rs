use std::f64::consts::PI;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::{ln_choose, log1p_exp};

use super::{ModelParams, PriorSpec, RandomEffects};

/// `k log p + (n - k) log(1 - p)` for `p = invlogit(theta)`, without the
/// binomial coefficient.
#[inline]
pub(crate) fn binomial_kernel(k: f64, n: f64, theta: f64) -> f64 {
    k * theta - n * log1p_exp(theta)
}

/// Log density of `N(μ, Σ)` at `x`. `params` must be valid.
#[inline]
pub(crate) fn bvn_logpdf(x: [f64; 2], params: &ModelParams) -> f64 {
    let za = (x[0] - params.mu_a) / params.sigma_a;
    let zb = (x[1] - params.mu_b) / params.sigma_b;
    let one_m_r2 = 1.0 - params.rho * params.rho;
    let q = (za * za - 2.0 * params.rho * za * zb + zb * zb) / one_m_r2;
    -(2.0 * PI).ln() - params.sigma_a.ln() - params.sigma_b.ln() - 0.5 * one_m_r2.ln() - 0.5 * q
}

/// Sum of `log N(θ_i | μ, Σ)` over studies.
pub(crate) fn effects_logpdf(theta: &[[f64; 2]], params: &ModelParams) -> f64 {
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for t in theta {
        let da = (t[0] - params.mu_a) / params.sigma_a;
        let db = (t[1] - params.mu_b) / params.sigma_b;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    let n = theta.len() as f64;
    let one_m_r2 = 1.0 - params.rho * params.rho;
    -n * ((2.0 * PI).ln() + params.sigma_a.ln() + params.sigma_b.ln() + 0.5 * one_m_r2.ln())
        - 0.5 * (saa - 2.0 * params.rho * sab + sbb) / one_m_r2
}

/// Log prior density of the hyperparameters; `-inf` outside the support.
pub fn log_prior(params: &ModelParams, prior: &PriorSpec) -> f64 {
    let in_support = params.sigma_a > 0.0
        && params.sigma_a < prior.sigma_upper
        && params.sigma_b > 0.0
        && params.sigma_b < prior.sigma_upper
        && params.rho > prior.rho_lower
        && params.rho < prior.rho_upper
        && params.rho.abs() < 1.0;
    if !in_support || !params.mu_a.is_finite() || !params.mu_b.is_finite() {
        return f64::NEG_INFINITY;
    }
    let normal = |x: f64| {
        let z = (x - prior.mu_mean) / prior.mu_sd;
        -0.5 * (2.0 * PI).ln() - prior.mu_sd.ln() - 0.5 * z * z
    };
    normal(params.mu_a) + normal(params.mu_b) - 2.0 * prior.sigma_upper.ln()
        - (prior.rho_upper - prior.rho_lower).ln()
}

/// Log joint density of data, random effects and hyperparameters, including
/// all normalizing constants.
pub fn log_joint(d: &Dataset, params: &ModelParams, effects: &RandomEffects, prior: &PriorSpec) -> Result<f64> {
    if effects.theta.len() != d.len() {
        return Err(Error::Dimension(format!(
            "{} random-effect pairs for {} studies",
            effects.theta.len(),
            d.len()
        )));
    }
    let lp = log_prior(params, prior);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    let mut total = lp + effects_logpdf(&effects.theta, params);
    for (s, t) in d.studies().iter().zip(&effects.theta) {
        total += ln_choose(s.n_a(), s.tp) + binomial_kernel(s.tp as f64, s.n_a() as f64, t[0]);
        total += ln_choose(s.n_b(), s.fp) + binomial_kernel(s.fp as f64, s.n_b() as f64, t[1]);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StudyRecord;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dataset(rows: &[(u64, u64, u64, u64)]) -> Dataset {
        let studies = rows
            .iter()
            .enumerate()
            .map(|(i, &(tp, fp, fn_, tn))| StudyRecord::new(i as u32 + 1, "", tp, fp, fn_, tn).unwrap())
            .collect();
        Dataset::new("t", studies).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::new(-0.2, -1.3, 0.8, 1.1, 0.3).unwrap()
    }

    #[test]
    fn rho_outside_support_is_neg_infinity() {
        let d = dataset(&[(3, 4, 5, 6)]);
        let e = RandomEffects { theta: vec![[0.0, 0.0]] };
        let mut p = params();
        p.rho = 1.2;
        assert_eq!(log_joint(&d, &p, &e, &PriorSpec::default()).unwrap(), f64::NEG_INFINITY);
        p.rho = 0.3;
        p.sigma_a = 11.0;
        assert_eq!(log_joint(&d, &p, &e, &PriorSpec::default()).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn single_binomial_term() {
        // C(2,1) * 0.5 * 0.5 = 0.5
        assert_abs_diff_eq!(ln_choose(2, 1) + binomial_kernel(1.0, 2.0, 0.0), 0.5f64.ln(), epsilon = 1e-12);
        // the full joint differs from a direct sum of the pieces by nothing
        let d = dataset(&[(1, 2, 1, 3)]);
        let e = RandomEffects { theta: vec![[0.0, -0.4]] };
        let p = params();
        let prior = PriorSpec::default();
        let pb: f64 = crate::stats::invlogit(-0.4);
        let direct = 0.5f64.ln()
            + (10.0 * pb * pb * (1.0 - pb).powi(3)).ln()
            + bvn_logpdf([0.0, -0.4], &p)
            + log_prior(&p, &prior);
        assert_abs_diff_eq!(log_joint(&d, &p, &e, &prior).unwrap(), direct, epsilon = 1e-10);
    }

    #[test]
    fn bvn_matches_matrix_form() {
        let p = params();
        let x = [0.7, -2.0];
        let s = p.covariance();
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        let d = [x[0] - p.mu_a, x[1] - p.mu_b];
        let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
        let expected = -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * q;
        assert_abs_diff_eq!(bvn_logpdf(x, &p), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(effects_logpdf(&[x, x], &p), 2.0 * expected, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let d = dataset(&[(3, 4, 5, 6), (1, 1, 1, 1)]);
        let e = RandomEffects { theta: vec![[0.0, 0.0]] };
        assert!(matches!(
            log_joint(&d, &params(), &e, &PriorSpec::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn scaled_counts_sharpen_likelihood() {
        // Scripted oracle: the binomial log-likelihood ratio between the MLE
        // and an off-MLE point grows linearly with the counts; compare 1x and 10x.
        let rows = [(12u64, 6u64, 8u64, 54u64)];
        let scaled = [(120u64, 60u64, 80u64, 540u64)];
        let mle = [(12.0f64 / 8.0).ln(), (6.0f64 / 54.0).ln()];
        let off = [mle[0] + 0.5, mle[1] - 0.5];
        let p = params();
        let prior = PriorSpec::default();
        let lj = |r: &[(u64, u64, u64, u64)], t: [f64; 2]| {
            let d = dataset(r);
            log_joint(&d, &p, &RandomEffects { theta: vec![t] }, &prior).unwrap()
                - bvn_logpdf(t, &p)
                - log_prior(&p, &prior)
        };
        let gap1 = lj(&rows, mle) - lj(&rows, off);
        let gap10 = lj(&scaled, mle) - lj(&scaled, off);
        // independent recomputation of the gap from the binomial pmf
        let oracle = |tp: f64, fn_: f64, fp: f64, tn: f64| {
            let ll = |k: f64, n: f64, pr: f64| k * pr.ln() + (n - k) * (1.0 - pr).ln();
            let pa = |t: f64| 1.0 / (1.0 + (-t).exp());
            ll(tp, tp + fn_, pa(mle[0])) - ll(tp, tp + fn_, pa(off[0])) + ll(fp, fp + tn, pa(mle[1]))
                - ll(fp, fp + tn, pa(off[1]))
        };
        assert!(gap1 > 0.0);
        assert_abs_diff_eq!(gap1, oracle(12.0, 8.0, 6.0, 54.0), epsilon = 1e-9);
        assert_abs_diff_eq!(gap10, oracle(120.0, 80.0, 60.0, 540.0), epsilon = 1e-8);
        assert_abs_diff_eq!(gap10, 10.0 * gap1, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in 0u64..1000, shift in 1usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<(u64, u64, u64, u64)> = (0..6)
                .map(|_| (rng.random_range(0..30), rng.random_range(0..30), rng.random_range(1..30), rng.random_range(1..30)))
                .collect();
            let theta: Vec<[f64; 2]> = (0..6).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
            let mut rows_p = rows.clone();
            let mut theta_p = theta.clone();
            rows_p.rotate_left(shift);
            theta_p.rotate_left(shift);
            let prior = PriorSpec::default();
            let a = log_joint(&dataset(&rows), &params(), &RandomEffects { theta }, &prior).unwrap();
            let b = log_joint(&dataset(&rows_p), &params(), &RandomEffects { theta: theta_p }, &prior).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}
