//! Machine-readable outputs of `analyze`.
//!
//! `diagnostics.csv` has one row per study with the columns in
//! [`DIAGNOSTIC_COLUMNS`]; missing statistics are empty cells. `pooled.csv`
//! has the all-studies fit followed by one row per detection method whose
//! flag set is non-empty, columns [`POOLED_COLUMNS`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dta_influence::influence::{AnalysisResult, FlagMethod, InfluenceRecord, SensitivityRefit, MIN_REFIT_STUDIES};
use dta_influence::mcmc::{PooledEstimates, PosteriorChain, PARAM_NAMES, RHAT_WARN};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const DIAGNOSTIC_COLUMNS: [&str; 24] = [
    "id",
    "label",
    "rd_a",
    "rd_b",
    "srd",
    "ard",
    "rd_dor",
    "sr_a",
    "sr_b",
    "ssr",
    "asr",
    "sr_dor",
    "p_a",
    "p_b",
    "p_sd",
    "p_ad",
    "p_dor",
    "delta_auc",
    "flag_srd",
    "flag_ssr",
    "flag_pvalue",
    "flag_dauc",
    "flag_rd_dor",
    "notes",
];

pub const POOLED_COLUMNS: [&str; 15] = [
    "analysis", "removed", "sens", "sens_lo", "sens_hi", "fpr", "fpr_lo", "fpr_hi", "auc", "auc_lo", "auc_hi", "dor",
    "dor_lo", "dor_hi", "max_rhat",
];

/// A method whose flagged set leaves too few studies to refit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRefit {
    pub method: FlagMethod,
    pub removed: Vec<u32>,
    pub reason: String,
}

/// Contents of `analysis.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub generator: String,
    pub analysis: AnalysisResult,
    pub refits: Vec<SensitivityRefit>,
    pub skipped_refits: Vec<SkippedRefit>,
    pub caveats: Vec<String>,
}

impl AnalysisReport {
    pub fn new(analysis: AnalysisResult, refits: Vec<SensitivityRefit>) -> Self {
        let n = analysis.metadata.n_comparisons;
        let caveats = vec![format!(
            "{n} study-by-method comparisons were made ({} studies, {} methods) without multiplicity adjustment",
            analysis.n_studies,
            FlagMethod::ALL.len()
        )];
        let skipped_refits = FlagMethod::ALL
            .iter()
            .map(|&m| (m, analysis.flagged(m)))
            .filter(|(m, ids)| !ids.is_empty() && !refits.iter().any(|r| r.method == Some(*m)))
            .map(|(method, removed)| SkippedRefit {
                reason: format!(
                    "removing {} of {} studies leaves fewer than {MIN_REFIT_STUDIES}",
                    removed.len(),
                    analysis.n_studies
                ),
                method,
                removed,
            })
            .collect();
        Self {
            schema: SCHEMA_VERSION,
            generator: format!("dta {}", env!("CARGO_PKG_VERSION")),
            analysis,
            refits,
            skipped_refits,
            caveats,
        }
    }
}

/// Convergence summary written as `validation.json` by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub rhat_threshold: f64,
    pub full_fit_max_rhat: f64,
    pub full_fit_min_ess: f64,
    pub loo_max_rhat: Vec<(u32, f64)>,
    pub refit_max_rhat: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    pub converged: bool,
}

impl ConvergenceReport {
    pub fn new(report: &AnalysisReport) -> Self {
        let a = &report.analysis;
        let mut warnings: Vec<String> = a.full.summary.warnings.iter().map(|w| format!("full fit: {w}")).collect();
        for f in &a.loo_fits {
            warnings.extend(f.warnings.iter().map(|w| format!("without study {}: {w}", f.study)));
        }
        let loo_max_rhat: Vec<(u32, f64)> = a.loo_fits.iter().map(|f| (f.study, f.max_rhat)).collect();
        let refit_max_rhat: Vec<(String, f64)> = report
            .refits
            .iter()
            .map(|r| (r.method.map_or("custom", |m| m.name()).to_string(), r.max_rhat))
            .collect();
        let full_fit_max_rhat = a.full.summary.max_rhat();
        let converged = std::iter::once(full_fit_max_rhat)
            .chain(loo_max_rhat.iter().map(|x| x.1))
            .chain(refit_max_rhat.iter().map(|x| x.1))
            .all(|r| r < RHAT_WARN);
        Self {
            schema: SCHEMA_VERSION,
            rhat_threshold: RHAT_WARN,
            full_fit_max_rhat,
            full_fit_min_ess: a.full.summary.params.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min),
            loo_max_rhat,
            refit_max_rhat,
            warnings,
            converged,
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::output(path, std::io::Error::other(e))
}

fn diagnostic_row(r: &InfluenceRecord) -> Vec<String> {
    let f = r.flags;
    vec![
        r.id.to_string(),
        r.label.clone(),
        num(r.rd_a),
        num(r.rd_b),
        num(r.srd),
        num(r.ard),
        num(r.rd_dor),
        num(r.sr_a),
        num(r.sr_b),
        opt(r.ssr),
        num(r.asr),
        num(r.sr_dor),
        num(r.p_a),
        num(r.p_b),
        opt(r.p_sd),
        num(r.p_ad),
        num(r.p_dor),
        num(r.delta_auc),
        f.srd.to_string(),
        f.ssr.to_string(),
        f.pvalue.to_string(),
        f.dauc.to_string(),
        f.rd_dor.to_string(),
        r.notes.join("; "),
    ]
}

pub fn write_diagnostics_csv(path: &Path, result: &AnalysisResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(DIAGNOSTIC_COLUMNS).map_err(|e| csv_error(path, e))?;
    for r in &result.records {
        w.write_record(diagnostic_row(r)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

fn pooled_row(name: &str, removed: &[u32], p: &PooledEstimates, auc: f64, ci: Option<(f64, f64)>, rhat: f64) -> Vec<String> {
    let removed = removed.iter().map(u32::to_string).collect::<Vec<_>>().join(";");
    let (lo, hi) = ci.map_or((String::new(), String::new()), |(l, h)| (num(l), num(h)));
    vec![
        name.to_string(),
        removed,
        num(p.eta_a.estimate),
        num(p.eta_a.lower),
        num(p.eta_a.upper),
        num(p.eta_b.estimate),
        num(p.eta_b.lower),
        num(p.eta_b.upper),
        num(auc),
        lo,
        hi,
        num(p.dor.estimate),
        num(p.dor.lower),
        num(p.dor.upper),
        num(rhat),
    ]
}

pub fn write_pooled_csv(path: &Path, report: &AnalysisReport) -> Result<(), CliError> {
    let full = &report.analysis.full;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(POOLED_COLUMNS).map_err(|e| csv_error(path, e))?;
    let all = pooled_row(
        "all studies",
        &[],
        &full.pooled,
        full.sroc.auc,
        full.sroc.auc_interval,
        full.summary.max_rhat(),
    );
    w.write_record(all).map_err(|e| csv_error(path, e))?;
    for r in &report.refits {
        let name = format!("without {}", r.method.map_or("custom", |m| m.name()));
        let row = pooled_row(&name, &r.removed, &r.pooled, r.auc, r.auc_interval, r.max_rhat);
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    for s in &report.skipped_refits {
        let mut row = vec![String::new(); POOLED_COLUMNS.len()];
        row[0] = format!("without {}", s.method.name());
        row[1] = s.removed.iter().map(u32::to_string).collect::<Vec<_>>().join(";");
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

/// Long-format chain dump: `param,draw_index,chain,value`.
pub fn write_chains_csv(path: &Path, chains: &[PosteriorChain]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["param", "draw_index", "chain", "value"]).map_err(|e| csv_error(path, e))?;
    let mut ordered: Vec<&PosteriorChain> = chains.iter().collect();
    ordered.sort_by_key(|c| c.chain_index);
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        for c in &ordered {
            for (i, v) in c.series(k).into_iter().enumerate() {
                w.write_record([name.to_string(), i.to_string(), c.chain_index.to_string(), num(v)])
                    .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_sroc_csv(path: &Path, result: &AnalysisResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["fpr", "sens"]).map_err(|e| csv_error(path, e))?;
    for p in &result.full.sroc.grid {
        w.write_record([num(p.fpr), num(p.sens)]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, std::io::Error::other(e)))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn read_report(path: &Path) -> Result<AnalysisReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::output(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::output(path, std::io::Error::other(e)))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::output(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `manifest.json`: bundle-relative path to SHA-256 of each file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub files: BTreeMap<String, String>,
}

pub fn write_manifest(dir: &Path, files: &[PathBuf]) -> Result<Manifest, CliError> {
    let mut map = BTreeMap::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().into_owned();
        map.insert(rel, sha256_file(f)?);
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        files: map,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
