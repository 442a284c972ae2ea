use std::fs;
use std::path::PathBuf;

use dta_influence::data::{load_csv, simulate_dataset};
use dta_influence::influence::{run_full_analysis_with, sensitivity_refits};
use dta_influence::mcmc::{run_mcmc, validate_sampler, KernelMode, ValidationOptions, ValidationReport};

use crate::args::{RunConfig, SimulateArgs, ValidateArgs, MIN_SBC_REPS};
use crate::error::CliError;
use crate::figures::render_figures;
use crate::report::{
    write_chains_csv, write_diagnostics_csv, write_json, write_manifest, write_pooled_csv, write_sroc_csv,
    AnalysisReport, ConvergenceReport, Manifest,
};

/// Files written by `analyze`.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub manifest: Manifest,
    pub report: AnalysisReport,
}

/// Input is validated and every fit completed before the output directory
/// is touched, so invalid input never leaves a partial bundle. When only some
/// leave-one-out fits fail the bundle is still written and
/// [`CliError::PartialFit`] is returned.
pub fn cmd_analyze(config: &RunConfig) -> Result<ReportBundle, CliError> {
    config.validate()?;
    let d = load_csv(&config.input)?;
    let result = run_full_analysis_with(&d, &config.prior, &config.mcmc, &config.thresholds, &config.options)?;
    let t = result.metadata.timings;
    eprintln!(
        "fitted {} studies: full fit {} ms, leave-one-out fits {} ms, total {} ms",
        d.len(),
        t.full_fit_ms,
        t.loo_ms,
        t.total_ms
    );
    let refits = sensitivity_refits(&d, &result, &config.prior, &config.mcmc)?;
    let chains = if config.dump_chains {
        Some(run_mcmc(&d, &config.prior, &config.mcmc)?.0)
    } else {
        None
    };
    let report = AnalysisReport::new(result, refits);

    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
    let mut files = Vec::new();
    let mut push = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    write_json(&push("analysis.json"), &report)?;
    write_diagnostics_csv(&push("diagnostics.csv"), &report.analysis)?;
    write_pooled_csv(&push("pooled.csv"), &report)?;
    write_json(&push("validation.json"), &ConvergenceReport::new(&report))?;
    write_sroc_csv(&push("sroc.csv"), &report.analysis)?;
    if let Some(chains) = &chains {
        write_chains_csv(&push("chains.csv"), chains)?;
    }
    if config.figures {
        files.extend(render_figures(&d, &report.analysis, &report.refits, &dir)?);
    }
    let manifest = write_manifest(&dir, &files)?;

    if !report.analysis.failures.is_empty() {
        for f in &report.analysis.failures {
            eprintln!("study {}: {}", f.study, f.message);
        }
        return Err(CliError::PartialFit {
            failed: report.analysis.failures.iter().map(|f| f.study).collect(),
            total: report.analysis.n_studies,
        });
    }
    Ok(ReportBundle {
        dir,
        files,
        manifest,
        report,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<PathBuf, CliError> {
    let params = args.params()?;
    let sizes = args.study_sizes()?;
    let d = simulate_dataset(&params, &sizes, args.seed)?;
    let file = fs::File::create(&args.out).map_err(|e| CliError::output(&args.out, e))?;
    d.write_csv(file)?;
    Ok(args.out.clone())
}

pub fn cmd_validate_sampler(args: &ValidateArgs) -> Result<ValidationReport, CliError> {
    if args.reps < MIN_SBC_REPS {
        return Err(CliError::Usage(format!("--reps must be at least {MIN_SBC_REPS}, got {}", args.reps)));
    }
    let mut options = ValidationOptions::new(args.seed);
    options.sbc_reps = args.reps;
    if args.broken_kernel {
        options.kernel = KernelMode::RejectAll;
    }
    let report = validate_sampler(&options)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::output(&args.out, e))?;
    write_json(&args.out.join("validation.json"), &report)?;
    for c in &report.gaussian.checks {
        eprintln!(
            "gaussian {:10} truth {:8.4} estimate {:8.4} mcse {:.4} {}",
            c.name,
            c.truth,
            c.estimate,
            c.mcse,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    for p in &report.sbc.params {
        eprintln!(
            "sbc      {:10} chi2 {:7.2} p {:.4} {}",
            p.name,
            p.chi_squared,
            p.p_value,
            if p.passed { "ok" } else { "FAIL" }
        );
    }
    if report.passed {
        Ok(report)
    } else {
        Err(CliError::ValidationFailed)
    }
}

/// Sizes the global rayon pool from `DTA_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("DTA_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("DTA_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))
}
