//! Posterior-predictive replicates, predictive moments and discrepancy
//! measures.
//!
//! A replicate for a study with margins `(n_A, n_B)` under hyperparameters ξ
//! is generated by drawing a fresh `θ* ~ N(μ, Σ)`, then `TP* ~ Bin(n_A,
//! invlogit θ*_A)` and `FP* ~ Bin(n_B, invlogit θ*_B)`, and finally applying
//! the same continuity-corrected logit transform as the observed data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{draw_binomial, draw_effects, table_logits};
use crate::error::{Error, Result};
use crate::mcmc::{ModelParams, PosteriorChain};

/// Relative determinant floor below which a 2×2 covariance is treated as
/// singular: `det > SINGULAR_TOL · v_A · v_B` is required.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Smallest inner Monte Carlo size accepted by [`conditional_moments_given_xi`].
pub const MIN_INNER_REPS: usize = 50;

/// Smallest replicate count accepted by [`loo_predictive_moments`].
pub const MIN_PREDICTIVE_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveReplicate {
    pub y_star_a: f64,
    pub y_star_b: f64,
    pub log_dor_star: f64,
    /// Index of the posterior draw that generated the replicate.
    pub source_draw: usize,
}

impl PredictiveReplicate {
    pub fn as_array(&self) -> [f64; 2] {
        [self.y_star_a, self.y_star_b]
    }
}

/// Empirical moments of replicated logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMoments {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub mean_log_dor: f64,
    pub var_log_dor: f64,
    pub n_replicates: usize,
}

impl PredictiveMoments {
    /// Whether [`discrepancy_synthetic`] can invert `cov`.
    pub fn is_invertible(&self) -> bool {
        covariance_determinant(&self.cov).is_ok()
    }
}

/// Streaming accumulator for [`PredictiveMoments`].
#[derive(Debug, Clone, Default)]
pub struct MomentAccumulator {
    n: usize,
    mean: [f64; 3],
    // (aa, ab, bb, dd)
    m2: [f64; 4],
}

impl MomentAccumulator {
    pub fn push(&mut self, r: &PredictiveReplicate) {
        self.n += 1;
        let n = self.n as f64;
        let x = [r.y_star_a, r.y_star_b, r.log_dor_star];
        let d: [f64; 3] = std::array::from_fn(|k| x[k] - self.mean[k]);
        for k in 0..3 {
            self.mean[k] += d[k] / n;
        }
        self.m2[0] += d[0] * (x[0] - self.mean[0]);
        self.m2[1] += d[0] * (x[1] - self.mean[1]);
        self.m2[2] += d[1] * (x[1] - self.mean[1]);
        self.m2[3] += d[2] * (x[2] - self.mean[2]);
    }

    pub fn finish(&self) -> PredictiveMoments {
        let denom = (self.n.max(2) - 1) as f64;
        let cab = self.m2[1] / denom;
        PredictiveMoments {
            mean: [self.mean[0], self.mean[1]],
            cov: [[self.m2[0] / denom, cab], [cab, self.m2[2] / denom]],
            mean_log_dor: self.mean[2],
            var_log_dor: self.m2[3] / denom,
            n_replicates: self.n,
        }
    }
}

/// One replicate for a study of size `(n_a, n_b)` under `params`.
pub fn draw_replicate<R: Rng + ?Sized>(params: &ModelParams, n_a: u64, n_b: u64, rng: &mut R) -> PredictiveReplicate {
    let theta = draw_effects(params, rng);
    let tp = draw_binomial(n_a, theta[0], rng);
    let fp = draw_binomial(n_b, theta[1], rng);
    let y = table_logits(tp, fp, n_a - tp, n_b - fp);
    PredictiveReplicate {
        y_star_a: y.y_a,
        y_star_b: y.y_b,
        log_dor_star: y.y_a - y.y_b,
        source_draw: 0,
    }
}

/// Posterior-predictive moments for a new study of size `(n_a, n_b)`,
/// generated from every pooled draw of `chains` (`reps_per_draw` replicates
/// each). Chains are visited in `chain_index` order.
pub fn loo_predictive_moments<R: Rng + ?Sized>(
    chains: &[PosteriorChain],
    n_a: u64,
    n_b: u64,
    reps_per_draw: usize,
    rng: &mut R,
) -> Result<PredictiveMoments> {
    let mut ordered: Vec<&PosteriorChain> = chains.iter().collect();
    ordered.sort_by_key(|c| c.chain_index);
    let total: usize = ordered.iter().map(|c| c.len()).sum::<usize>() * reps_per_draw;
    if total < MIN_PREDICTIVE_REPLICATES {
        return Err(Error::InsufficientDraws(format!(
            "{total} predictive replicates, need at least {MIN_PREDICTIVE_REPLICATES}"
        )));
    }
    let mut acc = MomentAccumulator::default();
    for (index, params) in ordered.iter().flat_map(|c| c.params.iter()).enumerate() {
        for _ in 0..reps_per_draw {
            let mut r = draw_replicate(params, n_a, n_b, rng);
            r.source_draw = index;
            acc.push(&r);
        }
    }
    Ok(acc.finish())
}

/// Moments of the replicated logits conditional on a fixed ξ, by inner
/// Monte Carlo over `inner_reps` replicates.
pub fn conditional_moments_given_xi<R: Rng + ?Sized>(
    params: &ModelParams,
    n_a: u64,
    n_b: u64,
    inner_reps: usize,
    rng: &mut R,
) -> Result<PredictiveMoments> {
    if inner_reps < MIN_INNER_REPS {
        return Err(Error::Config(format!("inner_reps = {inner_reps}, need at least {MIN_INNER_REPS}")));
    }
    let mut acc = MomentAccumulator::default();
    for _ in 0..inner_reps {
        acc.push(&draw_replicate(params, n_a, n_b, rng));
    }
    Ok(acc.finish())
}

/// `(y − m)² / v`.
pub fn discrepancy_marginal(y: f64, m: f64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::NonPositiveVariance(v));
    }
    Ok((y - m) * (y - m) / v)
}

fn covariance_determinant(cov: &[[f64; 2]; 2]) -> Result<f64> {
    let (va, vb) = (cov[0][0], cov[1][1]);
    let det = va * vb - cov[0][1] * cov[1][0];
    if !(va > 0.0 && vb > 0.0) || !(det > SINGULAR_TOL * va * vb) {
        return Err(Error::SingularCovariance { det });
    }
    Ok(det)
}

/// Quadratic form `(y − m)ᵀ cov⁻¹ (y − m)`.
pub fn discrepancy_synthetic(y: [f64; 2], m: [f64; 2], cov: &[[f64; 2]; 2]) -> Result<f64> {
    let det = covariance_determinant(cov)?;
    let d = [y[0] - m[0], y[1] - m[1]];
    let q = (cov[1][1] * d[0] * d[0] - (cov[0][1] + cov[1][0]) * d[0] * d[1] + cov[0][0] * d[1] * d[1]) / det;
    Ok(q.max(0.0))
}

/// Sum of the two marginal discrepancies.
pub fn discrepancy_average(y: [f64; 2], m: [f64; 2], v_a: f64, v_b: f64) -> Result<f64> {
    Ok(discrepancy_marginal(y[0], m[0], v_a)? + discrepancy_marginal(y[1], m[1], v_b)?)
}
