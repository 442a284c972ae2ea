use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::density::{binomial_kernel, bvn_logpdf, effects_logpdf, log_joint};
use super::diagnostics::{summarize, PosteriorSummary};
use super::kernel::{KernelMode, PairBlock, ScalarBlock};
use super::{McmcConfig, ModelParams, PriorSpec, RandomEffects};

const INIT_ATTEMPTS: usize = 100;

/// Post-burn-in acceptance rate of one update block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub rate: f64,
}

/// Retained (post-burn-in, thinned) draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub chain_index: usize,
    pub params: Vec<ModelParams>,
    /// Random effects, `n_studies` pairs per draw, draw-major.
    effects: Vec<[f64; 2]>,
    n_studies: usize,
    pub acceptance_rates: Vec<BlockAcceptance>,
}

impl PosteriorChain {
    /// Chain holding hyperparameter draws only (no random effects).
    pub fn from_params(chain_index: usize, params: Vec<ModelParams>) -> Self {
        Self {
            chain_index,
            params,
            effects: Vec::new(),
            n_studies: 0,
            acceptance_rates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_studies(&self) -> usize {
        self.n_studies
    }

    pub fn effects(&self, draw: usize) -> &[[f64; 2]] {
        &self.effects[draw * self.n_studies..(draw + 1) * self.n_studies]
    }

    pub fn draw(&self, draw: usize) -> (ModelParams, RandomEffects) {
        (
            self.params[draw],
            RandomEffects {
                theta: self.effects(draw).to_vec(),
            },
        )
    }

    /// Values of parameter `k` (in [`super::PARAM_NAMES`] order) across draws.
    pub fn series(&self, k: usize) -> Vec<f64> {
        self.params.iter().map(|p| p.as_array()[k]).collect()
    }

    /// Lowest post-burn-in acceptance rate over all blocks.
    pub fn min_acceptance(&self) -> f64 {
        self.acceptance_rates.iter().map(|b| b.rate).fold(f64::INFINITY, f64::min)
    }

    pub fn max_acceptance(&self) -> f64 {
        self.acceptance_rates.iter().map(|b| b.rate).fold(f64::NEG_INFINITY, f64::max)
    }
}

struct StudyData {
    tp: f64,
    n_a: f64,
    fp: f64,
    n_b: f64,
}

impl StudyData {
    #[inline]
    fn loglik(&self, t: [f64; 2]) -> f64 {
        binomial_kernel(self.tp, self.n_a, t[0]) + binomial_kernel(self.fp, self.n_b, t[1])
    }
}

struct State {
    params: ModelParams,
    theta: Vec<[f64; 2]>,
}

fn initial_state(d: &Dataset, prior: &PriorSpec) -> State {
    let logits = d.logits();
    let n = logits.len() as f64;
    let ya: Vec<f64> = logits.iter().map(|l| l.y_a).collect();
    let yb: Vec<f64> = logits.iter().map(|l| l.y_b).collect();
    let sd = |v: &[f64]| {
        crate::stats::variance(v)
            .sqrt()
            .max(0.1)
            .min(0.9 * prior.sigma_upper)
    };
    let rho = if prior.rho_lower < 0.0 && prior.rho_upper > 0.0 {
        0.0
    } else {
        0.5 * (prior.rho_lower + prior.rho_upper)
    };
    State {
        params: ModelParams {
            mu_a: ya.iter().sum::<f64>() / n,
            mu_b: yb.iter().sum::<f64>() / n,
            sigma_a: sd(&ya),
            sigma_b: sd(&yb),
            rho,
        },
        theta: logits.iter().map(|l| [l.y_a, l.y_b]).collect(),
    }
}

fn jitter(state: &State, attempt: usize, rng: &mut ChaCha8Rng) -> State {
    let amp = 0.1 * attempt as f64;
    let mut n = || -> f64 {
        let z: f64 = StandardNormal.sample(&mut *rng);
        amp * z
    };
    let p = state.params;
    State {
        params: ModelParams {
            mu_a: p.mu_a + n(),
            mu_b: p.mu_b + n(),
            sigma_a: p.sigma_a * n().exp(),
            sigma_b: p.sigma_b * n().exp(),
            rho: (p.rho.atanh() + n()).tanh(),
        },
        theta: state.theta.iter().map(|t| [t[0] + n(), t[1] + n()]).collect(),
    }
}

fn check_inputs(d: &Dataset, prior: &PriorSpec, config: &McmcConfig) -> Result<()> {
    config.validate()?;
    prior.validate()?;
    if d.len() < 2 {
        return Err(Error::Dataset(format!("{} studies, at least 2 required for a fit", d.len())));
    }
    Ok(())
}

/// Runs one chain of adaptive random-walk Metropolis-within-Gibbs.
///
/// Every iteration updates, in order: each study's `θ_i` pair jointly, the
/// mean pair `μ`, `log σ_A`, `log σ_B`, and `atanh ρ` (transformed blocks
/// include their Jacobians). Step sizes adapt during burn-in toward 0.44
/// acceptance for scalar blocks and 0.30 for pairs, then stay frozen. The
/// chain is a deterministic function of `(config.seed, chain_index)`.
pub fn run_chain(d: &Dataset, prior: &PriorSpec, config: &McmcConfig, chain_index: usize) -> Result<PosteriorChain> {
    run_chain_with_kernel(d, prior, config, chain_index, KernelMode::Standard)
}

pub fn run_chain_with_kernel(
    d: &Dataset,
    prior: &PriorSpec,
    config: &McmcConfig,
    chain_index: usize,
    kernel: KernelMode,
) -> Result<PosteriorChain> {
    check_inputs(d, prior, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_index as u64);

    let base = initial_state(d, prior);
    let mut state = None;
    for attempt in 0..INIT_ATTEMPTS {
        let candidate = if attempt == 0 {
            State {
                params: base.params,
                theta: base.theta.clone(),
            }
        } else {
            jitter(&base, attempt, &mut rng)
        };
        let effects = RandomEffects {
            theta: candidate.theta.clone(),
        };
        if log_joint(d, &candidate.params, &effects, prior)?.is_finite() {
            state = Some(candidate);
            break;
        }
    }
    let mut state = state.ok_or(Error::Initialization {
        attempts: INIT_ATTEMPTS,
    })?;

    let studies: Vec<StudyData> = d
        .studies()
        .iter()
        .map(|s| StudyData {
            tp: s.tp as f64,
            n_a: s.n_a() as f64,
            fp: s.fp as f64,
            n_b: s.n_b() as f64,
        })
        .collect();
    let n = studies.len();

    let mut theta_blocks: Vec<PairBlock> = d
        .studies()
        .iter()
        .map(|s| {
            let sd = |a: u64, b: u64| (1.0 / (a as f64 + 0.5) + 1.0 / (b as f64 + 0.5)).sqrt().min(2.0);
            PairBlock::new([sd(s.tp, s.fn_), sd(s.fp, s.tn)])
        })
        .collect();
    let mu_sd = |s: f64| (s / (n as f64).sqrt()).max(0.05);
    let mut mu_block = PairBlock::new([mu_sd(state.params.sigma_a), mu_sd(state.params.sigma_b)]);
    let mut sigma_a_block = ScalarBlock::new(0.3);
    let mut sigma_b_block = ScalarBlock::new(0.3);
    let mut rho_block = ScalarBlock::new(0.3);

    let mu_prior = |x: f64| {
        let z = (x - prior.mu_mean) / prior.mu_sd;
        -0.5 * z * z
    };
    let rho_ok = |r: f64| r > prior.rho_lower && r < prior.rho_upper && r.abs() < 1.0;

    let retained = config.retained_per_chain();
    let mut params_out = Vec::with_capacity(retained);
    let mut effects_out = Vec::with_capacity(retained * n);

    for iter in 0..config.iterations {
        let adapting = iter < config.burn_in;

        for ((theta, block), study) in state.theta.iter_mut().zip(theta_blocks.iter_mut()).zip(&studies) {
            let prop = block.propose(*theta, &mut rng);
            let log_ratio = study.loglik(prop) + bvn_logpdf(prop, &state.params)
                - study.loglik(*theta)
                - bvn_logpdf(*theta, &state.params);
            let accepted = kernel.accept(log_ratio, &mut rng);
            if accepted {
                *theta = prop;
            }
            block.adapter.record(accepted, adapting);
            if adapting {
                block.observe(*theta);
            }
        }

        let current = effects_logpdf(&state.theta, &state.params);

        // mu
        let mu = [state.params.mu_a, state.params.mu_b];
        let prop = mu_block.propose(mu, &mut rng);
        let cand = ModelParams {
            mu_a: prop[0],
            mu_b: prop[1],
            ..state.params
        };
        let cand_lp = effects_logpdf(&state.theta, &cand);
        let log_ratio = cand_lp + mu_prior(prop[0]) + mu_prior(prop[1]) - current - mu_prior(mu[0]) - mu_prior(mu[1]);
        let accepted = kernel.accept(log_ratio, &mut rng);
        let mut current = current;
        if accepted {
            state.params = cand;
            current = cand_lp;
        }
        mu_block.adapter.record(accepted, adapting);
        if adapting {
            mu_block.observe([state.params.mu_a, state.params.mu_b]);
        }

        // sigma_a, sigma_b on the log scale; Jacobian d sigma / d log sigma = sigma
        for which in 0..2 {
            let block = if which == 0 { &mut sigma_a_block } else { &mut sigma_b_block };
            let old = if which == 0 { state.params.sigma_a } else { state.params.sigma_b };
            let log_new = block.propose(old.ln(), &mut rng);
            let new = log_new.exp();
            let mut accepted = false;
            if new > 0.0 && new < prior.sigma_upper {
                let mut cand = state.params;
                if which == 0 {
                    cand.sigma_a = new;
                } else {
                    cand.sigma_b = new;
                }
                let cand_lp = effects_logpdf(&state.theta, &cand);
                let log_ratio = cand_lp - current + (log_new - old.ln());
                accepted = kernel.accept(log_ratio, &mut rng);
                if accepted {
                    state.params = cand;
                    current = cand_lp;
                }
            }
            block.adapter.record(accepted, adapting);
        }

        // rho on the Fisher-z scale; Jacobian d rho / dz = 1 - rho^2
        let old = state.params.rho;
        let z_new = rho_block.propose(old.atanh(), &mut rng);
        let new = z_new.tanh();
        let mut accepted = false;
        if rho_ok(new) {
            let cand = ModelParams { rho: new, ..state.params };
            let cand_lp = effects_logpdf(&state.theta, &cand);
            let log_ratio = cand_lp - current + (1.0 - new * new).ln() - (1.0 - old * old).ln();
            accepted = kernel.accept(log_ratio, &mut rng);
            if accepted {
                state.params = cand;
            }
        }
        rho_block.adapter.record(accepted, adapting);

        if adapting && (iter + 1) % config.adapt_window == 0 {
            theta_blocks.iter_mut().for_each(PairBlock::adapt);
            mu_block.adapt();
            sigma_a_block.adapter.adapt();
            sigma_b_block.adapter.adapt();
            rho_block.adapter.adapt();
        }

        if !adapting && (iter - config.burn_in + 1) % config.thin == 0 {
            params_out.push(state.params);
            effects_out.extend_from_slice(&state.theta);
        }
    }

    let mut acceptance_rates: Vec<BlockAcceptance> = d
        .studies()
        .iter()
        .zip(&theta_blocks)
        .map(|(s, b)| BlockAcceptance {
            block: format!("theta[{}]", s.id),
            rate: b.adapter.acceptance_rate(),
        })
        .collect();
    for (name, rate) in [
        ("mu", mu_block.adapter.acceptance_rate()),
        ("sigma_a", sigma_a_block.adapter.acceptance_rate()),
        ("sigma_b", sigma_b_block.adapter.acceptance_rate()),
        ("rho", rho_block.adapter.acceptance_rate()),
    ] {
        acceptance_rates.push(BlockAcceptance {
            block: name.to_string(),
            rate,
        });
    }

    Ok(PosteriorChain {
        chain_index,
        params: params_out,
        effects: effects_out,
        n_studies: n,
        acceptance_rates,
    })
}

/// Runs `config.chains` chains in parallel and summarizes the pooled draws.
pub fn run_mcmc(d: &Dataset, prior: &PriorSpec, config: &McmcConfig) -> Result<(Vec<PosteriorChain>, PosteriorSummary)> {
    run_mcmc_with_kernel(d, prior, config, KernelMode::Standard)
}

pub fn run_mcmc_with_kernel(
    d: &Dataset,
    prior: &PriorSpec,
    config: &McmcConfig,
    kernel: KernelMode,
) -> Result<(Vec<PosteriorChain>, PosteriorSummary)> {
    check_inputs(d, prior, config)?;
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain_with_kernel(d, prior, config, c, kernel))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&chains)?;
    Ok((chains, summary))
}
