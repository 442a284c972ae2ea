//! Sampler correctness harness: recovery of an analytic Gaussian target and
//! simulation-based calibration of the full model sampler.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::simulate_dataset;
use crate::error::Result;
use crate::stats::{chi_squared_uniform, mean, variance};

use super::diagnostics::effective_sample_size;
use super::kernel::{KernelMode, PairBlock};
use super::sampler::run_chain_with_kernel;
use super::{McmcConfig, ModelParams, PriorSpec, PARAM_NAMES};

/// Settings for [`validate_sampler`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Number of simulation-based calibration replications.
    pub sbc_reps: usize,
    /// Posterior draws each true value is ranked against.
    pub sbc_rank_draws: usize,
    pub sbc_bins: usize,
    /// `(n_A, n_B)` of each simulated study.
    pub sbc_sizes: Vec<(u64, u64)>,
    /// Prior used both to generate and to fit the calibration datasets.
    pub sbc_prior: PriorSpec,
    pub sbc_config: McmcConfig,
    pub gaussian_config: McmcConfig,
    pub gaussian_mean: [f64; 2],
    pub gaussian_cov: [[f64; 2]; 2],
    /// Per-check significance level.
    pub alpha: f64,
    pub kernel: KernelMode,
}

impl ValidationOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            sbc_reps: 100,
            sbc_rank_draws: 99,
            sbc_bins: 10,
            sbc_sizes: vec![(40, 80); 10],
            sbc_prior: PriorSpec {
                mu_mean: 0.0,
                mu_sd: 1.5,
                sigma_upper: 2.0,
                rho_lower: -1.0,
                rho_upper: 1.0,
            },
            sbc_config: McmcConfig {
                iterations: 12_000,
                burn_in: 2_000,
                thin: 10,
                chains: 1,
                seed,
                adapt_window: 50,
            },
            gaussian_config: McmcConfig {
                iterations: 60_000,
                burn_in: 10_000,
                thin: 1,
                chains: 4,
                seed,
                adapt_window: 50,
            },
            gaussian_mean: [1.0, 2.0],
            gaussian_cov: [[4.0, 0.0], [0.0, 1.0]],
            alpha: 0.01,
            kernel: KernelMode::Standard,
        }
    }
}

/// One recovered moment of the analytic target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub name: String,
    pub truth: f64,
    pub estimate: f64,
    pub mcse: f64,
    /// Monte Carlo standard error from the lag-1 autocorrelation alone.
    pub mcse_ar1: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTargetReport {
    pub checks: Vec<MomentCheck>,
    pub acceptance_rate: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcParamReport {
    pub name: String,
    pub bin_counts: Vec<u64>,
    pub chi_squared: f64,
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcReport {
    pub reps: usize,
    pub params: Vec<SbcParamReport>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub gaussian: GaussianTargetReport,
    pub sbc: SbcReport,
    pub passed: bool,
}

fn gaussian_logpdf(x: [f64; 2], m: [f64; 2], prec: [[f64; 2]; 2]) -> f64 {
    let d = [x[0] - m[0], x[1] - m[1]];
    -0.5 * (d[0] * (prec[0][0] * d[0] + prec[0][1] * d[1]) + d[1] * (prec[1][0] * d[0] + prec[1][1] * d[1]))
}

/// Samples a bivariate Gaussian with the same pair-block Metropolis kernel
/// the model sampler uses, returning one draw sequence per chain.
pub fn sample_gaussian_target(
    target_mean: [f64; 2],
    cov: [[f64; 2]; 2],
    config: &McmcConfig,
    kernel: KernelMode,
) -> Result<(Vec<Vec<[f64; 2]>>, f64)> {
    config.validate()?;
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let prec = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    let runs: Vec<(Vec<[f64; 2]>, usize, usize)> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(c as u64);
            let mut block = PairBlock::new([1.0, 1.0]);
            let mut x = [0.0, 0.0];
            let mut lp = gaussian_logpdf(x, target_mean, prec);
            let mut out = Vec::with_capacity(config.retained_per_chain());
            for iter in 0..config.iterations {
                let adapting = iter < config.burn_in;
                let prop = block.propose(x, &mut rng);
                let lp_prop = gaussian_logpdf(prop, target_mean, prec);
                let accepted = kernel.accept(lp_prop - lp, &mut rng);
                if accepted {
                    x = prop;
                    lp = lp_prop;
                }
                block.adapter.record(accepted, adapting);
                if adapting {
                    block.observe(x);
                    if (iter + 1) % config.adapt_window == 0 {
                        block.adapt();
                    }
                } else if (iter - config.burn_in + 1) % config.thin == 0 {
                    out.push(x);
                }
            }
            (out, block.adapter.kept_accepted, block.adapter.kept_proposed)
        })
        .collect();
    let accepted: usize = runs.iter().map(|r| r.1).sum();
    let proposed: usize = runs.iter().map(|r| r.2).sum();
    let rate = accepted as f64 / proposed.max(1) as f64;
    Ok((runs.into_iter().map(|r| r.0).collect(), rate))
}

fn lag1_mcse(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    let m = mean(series);
    let v = variance(series);
    if v <= 0.0 {
        return 0.0;
    }
    let r1 = series.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / ((n - 1.0) * v);
    let r1 = r1.clamp(-0.99, 0.99);
    (v * (1.0 + r1) / ((1.0 - r1) * n)).sqrt()
}

fn moment_check(name: &str, truth: f64, per_chain: Vec<Vec<f64>>) -> Result<MomentCheck> {
    let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
    let estimate = mean(&pooled);
    let ess = effective_sample_size(&per_chain)?;
    let mcse = (variance(&pooled) / ess).sqrt();
    Ok(MomentCheck {
        name: name.to_string(),
        truth,
        estimate,
        mcse,
        mcse_ar1: lag1_mcse(&pooled),
        passed: mcse > 0.0 && (estimate - truth).abs() <= 3.0 * mcse,
    })
}

/// Runs the Metropolis kernel on `N(mean, cov)` and checks the recovered
/// mean and covariance entries against the truth within 3 Monte Carlo
/// standard errors.
pub fn run_gaussian_target(
    target_mean: [f64; 2],
    cov: [[f64; 2]; 2],
    config: &McmcConfig,
    kernel: KernelMode,
) -> Result<GaussianTargetReport> {
    let (chains, acceptance_rate) = sample_gaussian_target(target_mean, cov, config, kernel)?;
    let coord = |k: usize| -> Vec<Vec<f64>> { chains.iter().map(|c| c.iter().map(|x| x[k]).collect()).collect() };
    let pooled_mean = |k: usize| mean(&coord(k).concat());
    let (m0, m1) = (pooled_mean(0), pooled_mean(1));
    let products = |f: &dyn Fn([f64; 2]) -> f64| -> Vec<Vec<f64>> {
        chains.iter().map(|c| c.iter().map(|&x| f(x)).collect()).collect()
    };
    let checks = vec![
        moment_check("mean[0]", target_mean[0], coord(0))?,
        moment_check("mean[1]", target_mean[1], coord(1))?,
        moment_check("cov[0][0]", cov[0][0], products(&|x| (x[0] - m0) * (x[0] - m0)))?,
        moment_check("cov[0][1]", cov[0][1], products(&|x| (x[0] - m0) * (x[1] - m1)))?,
        moment_check("cov[1][1]", cov[1][1], products(&|x| (x[1] - m1) * (x[1] - m1)))?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(GaussianTargetReport {
        checks,
        acceptance_rate,
        passed,
    })
}

fn draw_from_prior<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> ModelParams {
    let normal = Normal::new(prior.mu_mean, prior.mu_sd).expect("validated prior");
    let sigma = Uniform::new(0.0, prior.sigma_upper).expect("validated prior");
    let rho = Uniform::new(prior.rho_lower, prior.rho_upper).expect("validated prior");
    let positive = |rng: &mut R| loop {
        let s: f64 = sigma.sample(rng);
        if s > 0.0 {
            break s;
        }
    };
    let interior = |rng: &mut R| loop {
        let r: f64 = rho.sample(rng);
        if r.abs() < 1.0 && r > prior.rho_lower {
            break r;
        }
    };
    ModelParams {
        mu_a: normal.sample(rng),
        mu_b: normal.sample(rng),
        sigma_a: positive(rng),
        sigma_b: positive(rng),
        rho: interior(rng),
    }
}

/// Simulation-based calibration: for each replication draw ξ from the prior,
/// simulate a dataset, fit it, and rank the true ξ among posterior draws.
pub fn run_sbc(options: &ValidationOptions) -> Result<SbcReport> {
    options.sbc_prior.validate()?;
    let l = options.sbc_rank_draws;
    let ranks: Vec<[usize; 5]> = (0..options.sbc_reps)
        .into_par_iter()
        .map(|r| -> Result<[usize; 5]> {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r as u64 + 1);
            let truth = draw_from_prior(&options.sbc_prior, &mut rng);
            let data = simulate_dataset(&truth, &options.sbc_sizes, rng.next_u64())?;
            let config = options.sbc_config.with_seed(rng.next_u64());
            let chain = run_chain_with_kernel(&data, &options.sbc_prior, &config, 0, options.kernel)?;
            let stride = chain.len() as f64 / l as f64;
            let picked: Vec<ModelParams> = (0..l)
                .map(|j| chain.params[((j as f64 + 0.5) * stride) as usize])
                .collect();
            let t = truth.as_array();
            let mut out = [0usize; 5];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = picked.iter().filter(|p| p.as_array()[k] < t[k]).count();
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let params: Vec<SbcParamReport> = PARAM_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut counts = vec![0u64; options.sbc_bins];
            for r in &ranks {
                counts[r[k] * options.sbc_bins / (l + 1)] += 1;
            }
            let (chi_squared, p_value) = chi_squared_uniform(&counts);
            SbcParamReport {
                name: name.to_string(),
                bin_counts: counts,
                chi_squared,
                p_value,
                passed: p_value > options.alpha,
            }
        })
        .collect();
    let passed = params.iter().all(|p| p.passed);
    Ok(SbcReport {
        reps: options.sbc_reps,
        params,
        passed,
    })
}

/// Runs both validation suites; the report carries per-check pass flags.
pub fn validate_sampler(options: &ValidationOptions) -> Result<ValidationReport> {
    let gaussian = run_gaussian_target(
        options.gaussian_mean,
        options.gaussian_cov,
        &options.gaussian_config.with_seed(options.seed),
        options.kernel,
    )?;
    let sbc = run_sbc(options)?;
    let passed = gaussian.passed && sbc.passed;
    Ok(ValidationReport {
        seed: options.seed,
        gaussian,
        sbc,
        passed,
    })
}
