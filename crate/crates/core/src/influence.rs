//! Leave-one-out influence and outlier diagnostics.
//!
//! [`run_full_analysis`] fits the model to all studies and once per deleted
//! study, then derives for every study
//!
//! * relative distances of the pooled estimates (RD, SRD, ARD, RD on the DOR),
//! * standardized residuals against the leave-one-out predictive
//!   distribution (SR, SSR, ASR, SR on the log DOR),
//! * Bayesian p-values of five discrepancy measures under the full-data
//!   posterior,
//! * the change in SROC AUC when the study is removed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{observed_logits, Dataset, ObservedLogits, StudyRecord};
use crate::error::{Error, Result};
use crate::mcmc::{
    pooled_estimates, run_mcmc, McmcConfig, ModelParams, PooledEstimates, PosteriorChain, PosteriorSummary, PriorSpec,
};
use crate::predictive::{
    conditional_moments_given_xi, discrepancy_average, discrepancy_marginal, discrepancy_synthetic, draw_replicate,
    loo_predictive_moments, PredictiveMoments,
};
use crate::sroc::{delta_auc, posterior_sroc, sroc_curve, AucRange, FprRange, SrocCurve, SrocLine};

/// Per-fit seed offset for leave-one-out fits: `seed + LOO_SEED_STRIDE · id`.
pub const LOO_SEED_STRIDE: u64 = 1000;

const PVALUE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const RESIDUAL_SEED_SALT: u64 = 0xd1b5_4a32_d192_ed03;

/// Cut-offs for flagging a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub srd: f64,
    /// Upper 10% point of χ²₂.
    pub ssr: f64,
    pub p_value: f64,
    pub delta_auc: f64,
    pub rd_dor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            srd: 0.05,
            ssr: 4.61,
            p_value: 0.15,
            delta_auc: 0.02,
            rd_dor: 0.05,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("srd", self.srd),
            ("ssr", self.ssr),
            ("delta_auc", self.delta_auc),
            ("rd_dor", self.rd_dor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("threshold {name} must be positive, got {v}")));
            }
        }
        if !(self.p_value > 0.0 && self.p_value < 1.0) {
            return Err(Error::Config(format!("p-value threshold must lie in (0, 1), got {}", self.p_value)));
        }
        Ok(())
    }
}

/// Monte Carlo sizes for the Bayesian p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueConfig {
    /// Posterior draws (evenly thinned) over which p-values are averaged.
    pub outer_draws: usize,
    /// Replicates per draw used to estimate `E(y|ξ)` and `Var(y|ξ)`.
    pub inner_reps: usize,
    pub seed: u64,
}

impl Default for PValueConfig {
    fn default() -> Self {
        Self {
            outer_draws: 2000,
            inner_reps: 200,
            seed: 0,
        }
    }
}

/// Knobs of [`run_full_analysis_with`] beyond the sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub outer_draws: usize,
    pub inner_reps: usize,
    /// Predictive replicates per leave-one-out draw for the residuals.
    pub reps_per_draw: usize,
    pub auc_range: AucRange,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        let p = PValueConfig::default();
        Self {
            outer_draws: p.outer_draws,
            inner_reps: p.inner_reps,
            reps_per_draw: 2,
            auc_range: AucRange::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeDistances {
    pub rd_a: f64,
    pub rd_b: f64,
    pub srd: f64,
    pub ard: f64,
    pub rd_dor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub sr_a: f64,
    pub sr_b: f64,
    /// Missing when the predictive covariance is singular.
    pub ssr: Option<f64>,
    pub asr: f64,
    pub sr_dor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValues {
    pub p_a: f64,
    pub p_b: f64,
    /// Missing when any conditional covariance was singular.
    pub p_sd: Option<f64>,
    pub p_ad: f64,
    pub p_dor: f64,
}

impl PValues {
    /// Smallest of the synthetic, averaged and DOR p-values that are present.
    pub fn min_synthetic(&self) -> f64 {
        [self.p_sd.unwrap_or(f64::INFINITY), self.p_ad, self.p_dor]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// One flag per detection method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub srd: bool,
    pub ssr: bool,
    pub pvalue: bool,
    pub dauc: bool,
    pub rd_dor: bool,
}

/// Detection methods, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagMethod {
    Srd,
    Ssr,
    PValue,
    DeltaAuc,
    RdDor,
}

impl FlagMethod {
    pub const ALL: [FlagMethod; 5] = [
        FlagMethod::Srd,
        FlagMethod::Ssr,
        FlagMethod::PValue,
        FlagMethod::DeltaAuc,
        FlagMethod::RdDor,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FlagMethod::Srd => "srd",
            FlagMethod::Ssr => "ssr",
            FlagMethod::PValue => "pvalue",
            FlagMethod::DeltaAuc => "dauc",
            FlagMethod::RdDor => "rd_dor",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            FlagMethod::Srd => "relative distance (SRD)",
            FlagMethod::Ssr => "standardized residual (SSR)",
            FlagMethod::PValue => "Bayesian p-value",
            FlagMethod::DeltaAuc => "change in AUC",
            FlagMethod::RdDor => "relative distance of DOR",
        }
    }
}

impl Flags {
    pub fn get(&self, method: FlagMethod) -> bool {
        match method {
            FlagMethod::Srd => self.srd,
            FlagMethod::Ssr => self.ssr,
            FlagMethod::PValue => self.pvalue,
            FlagMethod::DeltaAuc => self.dauc,
            FlagMethod::RdDor => self.rd_dor,
        }
    }

    pub fn any(&self) -> bool {
        FlagMethod::ALL.iter().any(|&m| self.get(m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub id: u32,
    pub label: String,
    pub rd_a: f64,
    pub rd_b: f64,
    pub srd: f64,
    pub ard: f64,
    pub rd_dor: f64,
    pub sr_a: f64,
    pub sr_b: f64,
    pub sr_dor: f64,
    pub ssr: Option<f64>,
    pub asr: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_sd: Option<f64>,
    pub p_ad: f64,
    pub p_dor: f64,
    pub delta_auc: f64,
    pub flags: Flags,
    pub notes: Vec<String>,
}

impl InfluenceRecord {
    pub fn assemble(
        study: &StudyRecord,
        rd: RelativeDistances,
        sr: Residuals,
        p: PValues,
        delta_auc: f64,
        thresholds: &Thresholds,
    ) -> Self {
        let mut record = Self {
            id: study.id,
            label: study.label.clone(),
            rd_a: rd.rd_a,
            rd_b: rd.rd_b,
            srd: rd.srd,
            ard: rd.ard,
            rd_dor: rd.rd_dor,
            sr_a: sr.sr_a,
            sr_b: sr.sr_b,
            sr_dor: sr.sr_dor,
            ssr: sr.ssr,
            asr: sr.asr,
            p_a: p.p_a,
            p_b: p.p_b,
            p_sd: p.p_sd,
            p_ad: p.p_ad,
            p_dor: p.p_dor,
            delta_auc,
            flags: Flags::default(),
            notes: Vec::new(),
        };
        let (flags, notes) = classify(&record, thresholds);
        record.flags = flags;
        record.notes = notes;
        record
    }

    pub fn pvalues(&self) -> PValues {
        PValues {
            p_a: self.p_a,
            p_b: self.p_b,
            p_sd: self.p_sd,
            p_ad: self.p_ad,
            p_dor: self.p_dor,
        }
    }
}

/// Summary of one posterior fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub summary: PosteriorSummary,
    pub pooled: PooledEstimates,
    pub sroc: SrocCurve,
}

/// Leave-one-out fit without study `study`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooFit {
    pub study: u32,
    pub seed: u64,
    pub pooled: PooledEstimates,
    pub auc: f64,
    pub max_rhat: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub study: u32,
    pub message: String,
}

/// Wall-clock durations in milliseconds. Not serialized, so reports stay
/// reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub full_fit_ms: u128,
    pub loo_ms: u128,
    pub total_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: McmcConfig,
    pub prior: PriorSpec,
    pub thresholds: Thresholds,
    pub options: AnalysisOptions,
    pub fpr_range: FprRange,
    pub pvalue_seed: u64,
    pub loo_seeds: Vec<(u32, u64)>,
    /// Studies × methods tested, with no multiplicity adjustment.
    pub n_comparisons: usize,
    #[serde(skip)]
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub dataset: String,
    pub n_studies: usize,
    pub full: FitReport,
    pub records: Vec<InfluenceRecord>,
    pub loo_fits: Vec<LooFit>,
    pub failures: Vec<FitFailure>,
    pub metadata: RunMetadata,
}

impl AnalysisResult {
    pub fn record(&self, id: u32) -> Option<&InfluenceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Ids flagged by `method`, in dataset order.
    pub fn flagged(&self, method: FlagMethod) -> Vec<u32> {
        self.records.iter().filter(|r| r.flags.get(method)).map(|r| r.id).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.records.len() == self.n_studies
    }
}

/// `|η̂ − η̂₍ᵢ₎| / η̂` per margin, their Euclidean and arithmetic combinations,
/// and the same relative change for the DOR.
pub fn relative_distances(full: &PooledEstimates, loo: &PooledEstimates) -> RelativeDistances {
    let (ea, eb) = (full.eta_a.estimate, full.eta_b.estimate);
    let (da, db) = (ea - loo.eta_a.estimate, eb - loo.eta_b.estimate);
    let rd_a = (da / ea).abs();
    let rd_b = (db / eb).abs();
    let srd = (da * da + db * db).sqrt() / (ea * ea + eb * eb).sqrt();
    let dor = full.dor.estimate;
    RelativeDistances {
        rd_a,
        rd_b,
        srd,
        ard: 0.5 * (rd_a + rd_b),
        rd_dor: ((dor - loo.dor.estimate) / dor).abs(),
    }
}

fn signed_residual(y: f64, m: f64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::NonPositiveVariance(v));
    }
    Ok((y - m) / v.sqrt())
}

/// Residuals of the observed logits against predictive moments.
pub fn standardized_residuals(y: &ObservedLogits, log_dor_obs: f64, moments: &PredictiveMoments) -> Result<Residuals> {
    let sr_a = signed_residual(y.y_a, moments.mean[0], moments.cov[0][0])?;
    let sr_b = signed_residual(y.y_b, moments.mean[1], moments.cov[1][1])?;
    let sr_dor = signed_residual(log_dor_obs, moments.mean_log_dor, moments.var_log_dor)?;
    let ssr = match discrepancy_synthetic(y.as_array(), moments.mean, &moments.cov) {
        Ok(q) => Some(q),
        Err(Error::SingularCovariance { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(Residuals {
        sr_a,
        sr_b,
        ssr,
        asr: 0.5 * (sr_a.abs() + sr_b.abs()),
        sr_dor,
    })
}

/// Pooled draws in chain order, evenly thinned to at most `n`.
fn thinned_draws(chains: &[PosteriorChain], n: usize) -> Vec<ModelParams> {
    let mut ordered: Vec<&PosteriorChain> = chains.iter().collect();
    ordered.sort_by_key(|c| c.chain_index);
    let all: Vec<ModelParams> = ordered.iter().flat_map(|c| c.params.iter().copied()).collect();
    if all.len() <= n {
        return all;
    }
    (0..n).map(|k| all[k * all.len() / n]).collect()
}

/// Posterior-predictive p-values of the study's logits under the full-data
/// posterior. For each thinned draw ξ the moments `E(y|ξ)`, `Var(y|ξ)` are
/// estimated by inner simulation, one replicate is drawn, and the replicate
/// discrepancy is compared with the observed one (strictly greater counts).
pub fn bayesian_pvalues(study: &StudyRecord, full_chains: &[PosteriorChain], config: &PValueConfig) -> Result<PValues> {
    let draws = thinned_draws(full_chains, config.outer_draws);
    if draws.is_empty() {
        return Err(Error::InsufficientDraws("no posterior draws for p-values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(study.id as u64);
    pvalues_over(study, &draws, config.inner_reps, &mut rng)
}

fn pvalues_over<R: Rng>(study: &StudyRecord, draws: &[ModelParams], inner_reps: usize, rng: &mut R) -> Result<PValues> {
    let y = observed_logits(study);
    let obs = y.as_array();
    let (n_a, n_b) = (study.n_a(), study.n_b());
    let mut exceed = [0usize; 5];
    let mut sd_valid = true;
    for params in draws {
        let m = conditional_moments_given_xi(params, n_a, n_b, inner_reps, rng)?;
        let rep = draw_replicate(params, n_a, n_b, rng);
        let rep_y = rep.as_array();
        let (va, vb) = (m.cov[0][0], m.cov[1][1]);
        let pairs = [
            (
                discrepancy_marginal(obs[0], m.mean[0], va)?,
                discrepancy_marginal(rep_y[0], m.mean[0], va)?,
            ),
            (
                discrepancy_marginal(obs[1], m.mean[1], vb)?,
                discrepancy_marginal(rep_y[1], m.mean[1], vb)?,
            ),
            (0.0, 0.0),
            (
                discrepancy_average(obs, m.mean, va, vb)?,
                discrepancy_average(rep_y, m.mean, va, vb)?,
            ),
            (
                discrepancy_marginal(y.log_dor(), m.mean_log_dor, m.var_log_dor)?,
                discrepancy_marginal(rep.log_dor_star, m.mean_log_dor, m.var_log_dor)?,
            ),
        ];
        for (k, (d_obs, d_rep)) in pairs.iter().enumerate() {
            if k != 2 && d_rep > d_obs {
                exceed[k] += 1;
            }
        }
        if sd_valid {
            match (
                discrepancy_synthetic(obs, m.mean, &m.cov),
                discrepancy_synthetic(rep_y, m.mean, &m.cov),
            ) {
                (Ok(d_obs), Ok(d_rep)) => {
                    if d_rep > d_obs {
                        exceed[2] += 1;
                    }
                }
                _ => sd_valid = false,
            }
        }
    }
    let n = draws.len() as f64;
    let p = |k: usize| exceed[k] as f64 / n;
    Ok(PValues {
        p_a: p(0),
        p_b: p(1),
        p_sd: sd_valid.then(|| p(2)),
        p_ad: p(3),
        p_dor: p(4),
    })
}

/// Flags for one record. Missing statistics leave their flag unset and add a
/// note.
pub fn classify(record: &InfluenceRecord, t: &Thresholds) -> (Flags, Vec<String>) {
    let mut notes = Vec::new();
    let ssr = match record.ssr {
        Some(v) => v > t.ssr,
        None => {
            notes.push("SSR missing: singular leave-one-out predictive covariance".to_string());
            false
        }
    };
    if record.p_sd.is_none() {
        notes.push("p_sd missing: singular conditional covariance; p-value flag uses p_ad and p_dor".to_string());
    }
    let p = record.pvalues().min_synthetic();
    let flags = Flags {
        srd: record.srd > t.srd,
        ssr,
        pvalue: p < t.p_value,
        dauc: record.delta_auc.abs() >= t.delta_auc,
        rd_dor: record.rd_dor > t.rd_dor,
    };
    (flags, notes)
}

/// Seed of the leave-one-out fit that drops study `id`.
pub fn loo_seed(base: u64, id: u32) -> u64 {
    base.wrapping_add(LOO_SEED_STRIDE.wrapping_mul(id as u64))
}

/// Full analysis with default [`AnalysisOptions`].
pub fn run_full_analysis(
    d: &Dataset,
    prior: &PriorSpec,
    config: &McmcConfig,
    thresholds: &Thresholds,
) -> Result<AnalysisResult> {
    run_full_analysis_with(d, prior, config, thresholds, &AnalysisOptions::default())
}

struct LooOutcome {
    fit: LooFit,
    residuals: Residuals,
}

/// Full-data fit, one leave-one-out fit per study (in parallel), and every
/// per-study statistic. A failed leave-one-out fit is recorded in
/// [`AnalysisResult::failures`] and its study gets no record; a failed
/// full-data fit is an error.
pub fn run_full_analysis_with(
    d: &Dataset,
    prior: &PriorSpec,
    config: &McmcConfig,
    thresholds: &Thresholds,
    options: &AnalysisOptions,
) -> Result<AnalysisResult> {
    prior.validate()?;
    config.validate()?;
    thresholds.validate()?;
    if d.len() < 3 {
        return Err(Error::Dataset(format!("{} studies, need at least 3 for leave-one-out", d.len())));
    }
    if options.reps_per_draw == 0 {
        return Err(Error::Config("reps_per_draw must be positive".into()));
    }
    let fpr_range = options.auc_range.resolve(d)?;
    let pvalue = PValueConfig {
        outer_draws: options.outer_draws,
        inner_reps: options.inner_reps,
        seed: config.seed ^ PVALUE_SEED_SALT,
    };
    let start = Instant::now();

    let (full_chains, summary) = run_mcmc(d, prior, config)?;
    let full = FitReport {
        summary,
        pooled: pooled_estimates(&full_chains)?,
        sroc: posterior_sroc(&full_chains, fpr_range)?,
    };
    let full_fit_ms = start.elapsed().as_millis();

    let pvalues: Vec<Result<PValues>> = d
        .studies()
        .par_iter()
        .map(|s| bayesian_pvalues(s, &full_chains, &pvalue))
        .collect();

    let loo_start = Instant::now();
    let outcomes: Vec<Result<LooOutcome>> = d
        .studies()
        .par_iter()
        .map(|s| {
            loo_outcome(d, s, prior, config, fpr_range, options.reps_per_draw).map_err(|e| Error::StudyFit {
                study: s.id,
                source: Box::new(e),
            })
        })
        .collect();
    let loo_ms = loo_start.elapsed().as_millis();

    let mut records = Vec::with_capacity(d.len());
    let mut loo_fits = Vec::with_capacity(d.len());
    let mut failures = Vec::new();
    for ((study, outcome), p) in d.studies().iter().zip(outcomes).zip(pvalues) {
        let result = outcome.and_then(|o| {
            let p = p.map_err(|e| Error::StudyFit {
                study: study.id,
                source: Box::new(e),
            })?;
            Ok((o, p))
        });
        match result {
            Ok((o, p)) => {
                let rd = relative_distances(&full.pooled, &o.fit.pooled);
                let dauc = delta_auc(full.sroc.auc, o.fit.auc);
                records.push(InfluenceRecord::assemble(study, rd, o.residuals, p, dauc, thresholds));
                loo_fits.push(o.fit);
            }
            Err(e) => failures.push(FitFailure {
                study: study.id,
                message: e.to_string(),
            }),
        }
    }

    Ok(AnalysisResult {
        dataset: d.name.clone(),
        n_studies: d.len(),
        full,
        records,
        loo_fits,
        failures,
        metadata: RunMetadata {
            config: *config,
            prior: *prior,
            thresholds: *thresholds,
            options: *options,
            fpr_range,
            pvalue_seed: pvalue.seed,
            loo_seeds: d.ids().into_iter().map(|id| (id, loo_seed(config.seed, id))).collect(),
            n_comparisons: d.len() * FlagMethod::ALL.len(),
            timings: Timings {
                full_fit_ms,
                loo_ms,
                total_ms: start.elapsed().as_millis(),
            },
        },
    })
}

fn loo_outcome(
    d: &Dataset,
    study: &StudyRecord,
    prior: &PriorSpec,
    config: &McmcConfig,
    fpr_range: FprRange,
    reps_per_draw: usize,
) -> Result<LooOutcome> {
    let seed = loo_seed(config.seed, study.id);
    let loo = d.without(&[study.id])?;
    let (chains, summary) = run_mcmc(&loo, prior, &config.with_seed(seed))?;
    let pooled = pooled_estimates(&chains)?;
    let means = posterior_means(&summary)?;
    let auc = sroc_curve(&means, fpr_range)?.auc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ RESIDUAL_SEED_SALT);
    let moments = loo_predictive_moments(&chains, study.n_a(), study.n_b(), reps_per_draw, &mut rng)?;
    let y = observed_logits(study);
    let residuals = standardized_residuals(&y, y.log_dor(), &moments)?;
    Ok(LooOutcome {
        fit: LooFit {
            study: study.id,
            seed,
            pooled,
            auc,
            max_rhat: summary.max_rhat(),
            warnings: summary.warnings,
        },
        residuals,
    })
}

/// Posterior means of ξ as a parameter vector.
pub fn posterior_means(summary: &PosteriorSummary) -> Result<ModelParams> {
    let get = |name: &str| {
        summary
            .get(name)
            .map(|p| p.mean)
            .ok_or_else(|| Error::InsufficientDraws(format!("summary lacks {name}")))
    };
    ModelParams::new(get("mu_a")?, get("mu_b")?, get("sigma_a")?, get("sigma_b")?, get("rho")?)
}

/// Pooled estimates of a refit with a set of studies removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRefit {
    pub method: Option<FlagMethod>,
    pub removed: Vec<u32>,
    pub seed: u64,
    pub pooled: PooledEstimates,
    pub line: SrocLine,
    pub auc: f64,
    pub auc_interval: Option<(f64, f64)>,
    pub max_rhat: f64,
}

/// Fits the model without `removed` and reports pooled estimates and the
/// AUC over `fpr_range`.
pub fn refit_without(
    d: &Dataset,
    removed: &[u32],
    prior: &PriorSpec,
    config: &McmcConfig,
    fpr_range: FprRange,
) -> Result<SensitivityRefit> {
    let reduced = d.without(removed)?;
    let (chains, summary) = run_mcmc(&reduced, prior, config)?;
    let curve = posterior_sroc(&chains, fpr_range)?;
    Ok(SensitivityRefit {
        method: None,
        removed: removed.to_vec(),
        seed: config.seed,
        pooled: pooled_estimates(&chains)?,
        line: curve.line,
        auc: curve.auc,
        auc_interval: curve.auc_interval,
        max_rhat: summary.max_rhat(),
    })
}

/// Whether removing `ids` leaves a fittable dataset and removes something.
pub fn refit_feasible(d: &Dataset, ids: &[u32]) -> bool {
    !ids.is_empty() && d.len() >= ids.len() + MIN_REFIT_STUDIES
}

/// Fewest studies a sensitivity refit may keep.
pub const MIN_REFIT_STUDIES: usize = 2;

/// One refit per detection method whose flag set is non-empty and leaves at
/// least [`MIN_REFIT_STUDIES`] studies, each without that method's flagged
/// studies. Seeds are `seed − 1000·(k+1)` for the k-th
/// method in [`FlagMethod::ALL`], disjoint from the leave-one-out seeds.
pub fn sensitivity_refits(
    d: &Dataset,
    result: &AnalysisResult,
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<Vec<SensitivityRefit>> {
    let jobs: Vec<(usize, FlagMethod, Vec<u32>)> = FlagMethod::ALL
        .iter()
        .enumerate()
        .map(|(k, &m)| (k, m, result.flagged(m)))
        .filter(|(_, _, ids)| refit_feasible(d, ids))
        .collect();
    jobs.into_par_iter()
        .map(|(k, method, ids)| {
            let seed = config.seed.wrapping_sub(LOO_SEED_STRIDE * (k as u64 + 1));
            let mut refit = refit_without(d, &ids, prior, &config.with_seed(seed), result.metadata.fpr_range)?;
            refit.method = Some(method);
            Ok(refit)
        })
        .collect()
}
