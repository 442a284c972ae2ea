use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dta_influence::influence::{AnalysisOptions, Thresholds};
use dta_influence::mcmc::{McmcConfig, ModelParams, PriorSpec};
use dta_influence::sroc::AucRange;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dta", version, about = "Bayesian influence and outlier diagnostics for diagnostic test accuracy meta-analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model, run leave-one-out diagnostics and write a report bundle.
    Analyze(AnalyzeArgs),
    /// Write a synthetic dataset drawn from the bivariate model.
    Simulate(SimulateArgs),
    /// Check the sampler on an analytic target and by simulation-based calibration.
    ValidateSampler(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AucRangeArg {
    Full,
    Observed,
}

impl From<AucRangeArg> for AucRange {
    fn from(a: AucRangeArg) -> Self {
        match a {
            AucRangeArg::Full => AucRange::Full,
            AucRangeArg::Observed => AucRange::Observed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Study table with header `id,label,tp,fp,fn,tn`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub thr_srd: Option<f64>,
    #[arg(long)]
    pub thr_ssr: Option<f64>,
    #[arg(long)]
    pub thr_pval: Option<f64>,
    #[arg(long)]
    pub thr_dauc: Option<f64>,
    #[arg(long)]
    pub thr_rd_dor: Option<f64>,
    #[arg(long, value_enum, default_value_t = AucRangeArg::Full)]
    pub auc_range: AucRangeArg,
    /// Write SVG figures.
    #[arg(long)]
    pub figures: bool,
    /// Short run: 12000 iterations, 2000 burn-in, 2 chains.
    #[arg(long)]
    pub fast: bool,
    /// Posterior draws used for the Bayesian p-values.
    #[arg(long)]
    pub outer_draws: Option<usize>,
    /// Inner replicates per draw for the conditional moments.
    #[arg(long)]
    pub inner_reps: Option<usize>,
    /// Also write the full-data chains as `chains.csv`.
    #[arg(long)]
    pub dump_chains: bool,
}

/// Everything `analyze` needs, after defaults and overrides are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub mcmc: McmcConfig,
    pub prior: PriorSpec,
    pub thresholds: Thresholds,
    pub options: AnalysisOptions,
    pub figures: bool,
    pub dump_chains: bool,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            out_dir: out_dir.into(),
            mcmc: McmcConfig::default(),
            prior: PriorSpec::default(),
            thresholds: Thresholds::default(),
            options: AnalysisOptions::default(),
            figures: false,
            dump_chains: false,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.mcmc.validate()?;
        self.prior.validate()?;
        self.thresholds.validate()?;
        if self.options.outer_draws == 0 || self.options.reps_per_draw == 0 {
            return Err(CliError::Usage("outer draws and replicates per draw must be positive".into()));
        }
        if self.options.inner_reps < dta_influence::predictive::MIN_INNER_REPS {
            return Err(CliError::Usage(format!(
                "--inner-reps must be at least {}",
                dta_influence::predictive::MIN_INNER_REPS
            )));
        }
        if self.out_dir.is_file() {
            return Err(CliError::Usage(format!("{} exists and is not a directory", self.out_dir.display())));
        }
        Ok(())
    }
}

impl TryFrom<AnalyzeArgs> for RunConfig {
    type Error = CliError;

    fn try_from(a: AnalyzeArgs) -> Result<Self, CliError> {
        let base = if a.fast { McmcConfig::fast() } else { McmcConfig::default() };
        let mcmc = McmcConfig {
            iterations: a.iters.unwrap_or(base.iterations),
            burn_in: a.burnin.unwrap_or(base.burn_in),
            thin: a.thin.unwrap_or(base.thin),
            chains: a.chains.unwrap_or(base.chains),
            seed: a.seed.unwrap_or(base.seed),
            ..base
        };
        let t = Thresholds::default();
        let thresholds = Thresholds {
            srd: a.thr_srd.unwrap_or(t.srd),
            ssr: a.thr_ssr.unwrap_or(t.ssr),
            p_value: a.thr_pval.unwrap_or(t.p_value),
            delta_auc: a.thr_dauc.unwrap_or(t.delta_auc),
            rd_dor: a.thr_rd_dor.unwrap_or(t.rd_dor),
        };
        let o = AnalysisOptions::default();
        let options = AnalysisOptions {
            outer_draws: a.outer_draws.unwrap_or(o.outer_draws),
            inner_reps: a.inner_reps.unwrap_or(o.inner_reps),
            auc_range: a.auc_range.into(),
            ..o
        };
        let config = RunConfig {
            input: a.input,
            out_dir: a.out,
            mcmc,
            prior: PriorSpec::default(),
            thresholds,
            options,
            figures: a.figures,
            dump_chains: a.dump_chains,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub mu_a: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub mu_b: f64,
    /// Sets both standard deviations unless overridden.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub sigma_a: Option<f64>,
    #[arg(long)]
    pub sigma_b: Option<f64>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub rho: f64,
    /// Number of studies, each of size `--n-a` by `--n-b`.
    #[arg(long, default_value_t = 10)]
    pub studies: usize,
    #[arg(long, default_value_t = 50)]
    pub n_a: u64,
    #[arg(long, default_value_t = 100)]
    pub n_b: u64,
    /// Explicit sizes as `nA:nB,nA:nB,...`; overrides `--studies`.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl SimulateArgs {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let sigma = self.sigma.unwrap_or(1.0);
        Ok(ModelParams::new(
            self.mu_a,
            self.mu_b,
            self.sigma_a.unwrap_or(sigma),
            self.sigma_b.unwrap_or(sigma),
            self.rho,
        )?)
    }

    pub fn study_sizes(&self) -> Result<Vec<(u64, u64)>, CliError> {
        match &self.sizes {
            None => {
                if self.studies == 0 {
                    return Err(CliError::Usage("--studies must be positive".into()));
                }
                Ok(vec![(self.n_a, self.n_b); self.studies])
            }
            Some(spec) => spec
                .split(',')
                .map(|pair| {
                    let (a, b) = pair
                        .split_once(':')
                        .ok_or_else(|| CliError::Usage(format!("size `{pair}` is not of the form nA:nB")))?;
                    let parse = |s: &str| {
                        s.trim()
                            .parse::<u64>()
                            .map_err(|_| CliError::Usage(format!("size `{pair}` is not a pair of counts")))
                    };
                    Ok((parse(a)?, parse(b)?))
                })
                .collect(),
        }
    }
}

/// Smallest SBC replication count accepted by `validate-sampler`.
pub const MIN_SBC_REPS: usize = 20;

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 20_200_917)]
    pub seed: u64,
    /// Simulation-based calibration replications.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Directory for `validation.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Replace the transition kernel with one that rejects every proposal.
    #[arg(long, hide = true)]
    pub broken_kernel: bool,
}
