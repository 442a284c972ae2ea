//! Convergence diagnostics (split-R̂, multi-chain ESS) and posterior summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted, variance};

use super::PosteriorChain;

pub const PARAM_NAMES: [&str; 5] = ["mu_a", "mu_b", "sigma_a", "sigma_b", "rho"];

/// R̂ above this triggers a warning in [`PosteriorSummary::warnings`].
pub const RHAT_WARN: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub r_hat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    pub chains: usize,
    pub total_draws: usize,
    pub warnings: Vec<String>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn max_rhat(&self) -> f64 {
        self.params.iter().map(|p| p.r_hat).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn trimmed(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if chains.is_empty() || n < 4 {
        return Err(Error::InsufficientDraws(format!(
            "{} chains with at least {n} draws, need at least 4 per chain",
            chains.len()
        )));
    }
    Ok(chains.iter().map(|c| &c[..n]).collect())
}

/// Split-R̂: each chain is halved and the classical potential scale reduction
/// is computed over the halves. NaN when every half is constant.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let chains = trimmed(chains)?;
    let half = chains[0].len() / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect();
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| variance(h)).collect::<Vec<_>>());
    let b = n * variance(&means);
    if w <= 0.0 {
        return Ok(f64::NAN);
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

fn autocovariance(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// truncation. Capped at the total number of draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    let chains = trimmed(chains)?;
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| variance(c)).collect();
    let w = mean(&vars);
    if w <= 0.0 {
        return Ok(1.0);
    }
    let nf = n as f64;
    let b_over_n = if m > 1 { variance(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;

    let rho = |lag: usize| -> f64 {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };

    // Geyer: sum pairs Γ_k = ρ_{2k} + ρ_{2k+1} while positive, enforcing
    // monotone decrease.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(2 * k) + rho(2 * k + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    Ok((total / tau).min(total))
}

/// Summaries of the pooled draws. Chains are pooled in `chain_index` order,
/// so the result does not depend on the order of `chains`.
pub(crate) fn summarize(chains: &[PosteriorChain]) -> Result<PosteriorSummary> {
    if chains.is_empty() || chains.iter().any(|c| c.is_empty()) {
        return Err(Error::InsufficientDraws("empty chain".into()));
    }
    let mut ordered: Vec<&PosteriorChain> = chains.iter().collect();
    ordered.sort_by_key(|c| c.chain_index);

    let mut params = Vec::with_capacity(PARAM_NAMES.len());
    let mut warnings = Vec::new();
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let per_chain: Vec<Vec<f64>> = ordered.iter().map(|c| c.series(k)).collect();
        let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
        let mut sorted = pooled.clone();
        sorted.sort_by(f64::total_cmp);
        let r_hat = split_rhat(&per_chain)?;
        let ess = effective_sample_size(&per_chain)?;
        if !(r_hat <= RHAT_WARN) {
            warnings.push(format!("R-hat for {name} is {r_hat:.3} (> {RHAT_WARN})"));
        }
        params.push(ParamSummary {
            name: name.to_string(),
            mean: mean(&pooled),
            sd: variance(&pooled).sqrt(),
            q025: quantile_sorted(&sorted, 0.025),
            q975: quantile_sorted(&sorted, 0.975),
            r_hat,
            ess,
        });
    }
    Ok(PosteriorSummary {
        params,
        chains: ordered.len(),
        total_draws: ordered.iter().map(|c| c.len()).sum(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64, offset: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + e;
                x + offset
            })
            .collect()
    }

    #[test]
    fn rhat_near_one_for_iid_and_large_for_shifted() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(0.0, 2000, s, 0.0)).collect();
        let r = split_rhat(&chains).unwrap();
        assert!((r - 1.0).abs() < 0.01, "{r}");
        let shifted: Vec<Vec<f64>> = (0..4).map(|s| ar1(0.0, 2000, s, s as f64)).collect();
        assert!(split_rhat(&shifted).unwrap() > 1.5);
    }

    #[test]
    fn rhat_detects_within_chain_drift() {
        let drift: Vec<f64> = (0..2000).map(|i| i as f64 / 100.0).collect();
        assert!(split_rhat(&[drift]).unwrap() > 1.5);
    }

    #[test]
    fn ess_matches_ar1_theory() {
        // ESS/n for AR(1) is (1 - phi) / (1 + phi)
        let phi = 0.8;
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(phi, 20_000, 100 + s, 0.0)).collect();
        let ess = effective_sample_size(&chains).unwrap();
        let expected = 80_000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((ess / expected - 1.0).abs() < 0.15, "ess {ess} vs {expected}");
    }

    #[test]
    fn ess_of_iid_close_to_n_and_capped() {
        let chains: Vec<Vec<f64>> = (0..2).map(|s| ar1(0.0, 5000, 7 + s, 0.0)).collect();
        let ess = effective_sample_size(&chains).unwrap();
        assert!(ess > 8000.0 && ess <= 10_000.0, "{ess}");
        let alternating: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(effective_sample_size(&[alternating]).unwrap() <= 1000.0);
    }

    #[test]
    fn too_few_draws() {
        assert!(split_rhat(&[vec![1.0, 2.0]]).is_err());
        assert!(effective_sample_size(&[]).is_err());
    }
}
