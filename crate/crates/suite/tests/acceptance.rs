//! Acceptance checks on the ultrasound VUR dataset at default settings.
//! Each test prints one `PASS`/`FAIL` line to stderr, uncaptured.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use dta_cli::{cmd_analyze, ReportBundle, RunConfig};
use dta_influence::data::{load_csv, simulate_dataset, table_logits, Dataset};
use dta_influence::influence::{
    posterior_means, refit_without, run_full_analysis_with, standardized_residuals, AnalysisOptions, InfluenceRecord,
    Thresholds,
};
use dta_influence::mcmc::{validate_sampler, McmcConfig, PriorSpec, ValidationOptions};
use dta_influence::predictive::PredictiveMoments;
use dta_influence::sroc::{line_auc, FprRange, SrocLine};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ultrasound_vur.csv")
}

fn table1() -> Dataset {
    load_csv(data_path()).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    bundle: ReportBundle,
}

/// One analysis bundle at default settings, shared by the criteria.
fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut config = RunConfig::new(data_path(), dir.path().join("bundle"));
        config.figures = true;
        let bundle = cmd_analyze(&config).unwrap();
        Fixture { _dir: dir, bundle }
    })
}

fn record(id: u32) -> &'static InfluenceRecord {
    fixture().bundle.report.analysis.record(id).unwrap()
}

struct Checks {
    name: &'static str,
    items: Vec<(String, bool)>,
}

impl Checks {
    fn new(name: &'static str) -> Self {
        Self { name, items: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.items.push((label.into(), ok));
    }

    fn within(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        self.check(format!("{label} {value:.4} vs {target} ± {tol}"), (value - target).abs() <= tol);
    }

    fn finish(self) {
        let failed: Vec<&str> = self.items.iter().filter(|(_, ok)| !ok).map(|(l, _)| l.as_str()).collect();
        let line = if failed.is_empty() {
            format!("PASS {} ({} checks)", self.name, self.items.len())
        } else {
            format!("FAIL {} ({} of {} checks failed: {})", self.name, failed.len(), self.items.len(), failed.join("; "))
        };
        writeln!(std::io::stderr(), "{line}").unwrap();
        assert!(failed.is_empty(), "{line}");
    }
}

fn set(ids: &[u32]) -> BTreeSet<u32> {
    ids.iter().copied().collect()
}

#[test]
fn c1_pooled_estimates() {
    let full = &fixture().bundle.report.analysis.full;
    let p = &full.pooled;
    let (auc_lo, auc_hi) = full.sroc.auc_interval.unwrap();
    let mut c = Checks::new("c1 pooled estimates, all studies");
    c.within("sensitivity", p.eta_a.estimate, 0.44, 0.02);
    c.within("sensitivity lower", p.eta_a.lower, 0.33, 0.05);
    c.within("sensitivity upper", p.eta_a.upper, 0.56, 0.05);
    c.within("fpr", p.eta_b.estimate, 0.22, 0.02);
    c.within("fpr lower", p.eta_b.lower, 0.13, 0.05);
    c.within("fpr upper", p.eta_b.upper, 0.34, 0.05);
    c.within("auc", full.sroc.auc, 0.588, 0.03);
    c.within("auc lower", auc_lo, 0.474, 0.05);
    c.within("auc upper", auc_hi, 0.676, 0.05);
    c.within("dor", p.dor.estimate, 2.82, 0.35);
    c.within("dor lower", p.dor.lower, 1.75, 0.8);
    c.within("dor upper", p.dor.upper, 4.60, 0.8);
    c.finish();
}

#[test]
fn c2_bayesian_pvalues() {
    let (s1, s8, s9) = (record(1), record(8), record(9));
    let mut c = Checks::new("c2 bayesian p-values");
    c.check(format!("study 9 p_dor {:.4} <= 0.02", s9.p_dor), s9.p_dor <= 0.02);
    c.check(format!("study 9 p_b {:.4} <= 0.06", s9.p_b), s9.p_b <= 0.06);
    c.check(format!("study 1 p_dor {:.4} <= 0.10", s1.p_dor), s1.p_dor <= 0.10);
    c.check(format!("study 1 p_b {:.4} <= 0.15", s1.p_b), s1.p_b <= 0.15);
    c.check(format!("study 8 p_sd {:?} >= 0.95", s8.p_sd), s8.p_sd.is_some_and(|p| p >= 0.95));
    let flagged: BTreeSet<u32> = fixture()
        .bundle
        .report
        .analysis
        .records
        .iter()
        .filter(|r| r.p_sd.unwrap_or(f64::INFINITY).min(r.p_ad).min(r.p_dor) < 0.15)
        .map(|r| r.id)
        .collect();
    c.check(format!("min p-value < 0.15 set {flagged:?} == {{1, 9}}"), flagged == set(&[1, 9]));
    c.finish();
}

#[test]
fn c3_classification_sets() {
    let records = &fixture().bundle.report.analysis.records;
    let by = |f: &dyn Fn(&InfluenceRecord) -> bool| -> BTreeSet<u32> {
        records.iter().filter(|r| f(r)).map(|r| r.id).collect()
    };
    let mut c = Checks::new("c3 classification sets");
    for (name, got, want) in [
        ("srd > 0.05", by(&|r| r.srd > 0.05), set(&[7, 15])),
        ("ssr > 4.61", by(&|r| r.ssr.is_some_and(|s| s > 4.61)), set(&[1, 7, 9, 15])),
        ("rd_dor > 0.05", by(&|r| r.rd_dor > 0.05), set(&[1, 7, 9, 10])),
        ("|dauc| >= 0.02", by(&|r| r.delta_auc.abs() >= 0.02), set(&[1, 15])),
    ] {
        c.check(format!("{name}: {got:?} == {want:?}"), got == want);
    }
    c.finish();
}

#[test]
fn c4_delta_auc() {
    let mut c = Checks::new("c4 delta auc");
    c.within("study 1", record(1).delta_auc, -0.036, 0.012);
    c.within("study 15", record(15).delta_auc, 0.028, 0.012);
    for r in &fixture().bundle.report.analysis.records {
        if r.id != 1 && r.id != 15 {
            c.check(format!("study {} |{:.4}| < 0.025", r.id, r.delta_auc), r.delta_auc.abs() < 0.025);
        }
    }
    c.finish();
}

#[test]
fn c5_sensitivity_refits() {
    let d = table1();
    let config = McmcConfig::default();
    let mut c = Checks::new("c5 sensitivity refits");
    for (removed, sens, fpr, auc, auc_tol, dor, dor_tol) in [
        (vec![1, 7, 9, 15], 0.43, 0.20, 0.625, 0.03, 3.04, 0.4),
        (vec![1, 9], 0.44, 0.23, 0.634, 0.03, 2.72, 0.4),
        (vec![7, 15], 0.44, 0.20, 0.565, 0.04, 3.19, 0.5),
        (vec![1, 15], 0.41, 0.18, 0.606, 0.04, 3.13, 0.5),
    ] {
        let r = refit_without(&d, &removed, &PriorSpec::default(), &config, FprRange::FULL).unwrap();
        let tag = format!("without {removed:?}");
        c.within(&format!("{tag} sensitivity"), r.pooled.eta_a.estimate, sens, 0.02);
        c.within(&format!("{tag} fpr"), r.pooled.eta_b.estimate, fpr, 0.02);
        c.within(&format!("{tag} auc"), r.auc, auc, auc_tol);
        c.within(&format!("{tag} dor"), r.pooled.dor.estimate, dor, dor_tol);
    }
    c.finish();
}

#[test]
fn c6_sampler_validation() {
    let report = validate_sampler(&ValidationOptions::new(20_200_917)).unwrap();
    let mut c = Checks::new("c6 sampler validation");
    for m in &report.gaussian.checks {
        c.check(
            format!("gaussian {} {:.4} vs {} (3 mcse = {:.4})", m.name, m.estimate, m.truth, 3.0 * m.mcse),
            (m.estimate - m.truth).abs() <= 3.0 * m.mcse,
        );
    }
    c.check(format!("sbc reps {}", report.sbc.reps), report.sbc.reps == 100);
    for p in &report.sbc.params {
        c.check(format!("sbc {} p {:.4} > 0.01", p.name, p.p_value), p.p_value > 0.01);
    }
    let rhat = fixture().bundle.report.analysis.full.summary.max_rhat();
    c.check(format!("full fit max rhat {rhat:.4} < 1.05"), rhat < 1.05);
    c.finish();
}

fn invlogit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Stratified Monte Carlo estimate of the area under `line` on (0, 1).
fn stratified_auc(line: &SrocLine, strata: usize, rng: &mut ChaCha8Rng) -> f64 {
    (0..strata)
        .map(|k| {
            let u: f64 = rng.random();
            let x: f64 = ((k as f64 + u) / strata as f64).clamp(1e-15, 1.0 - 1e-15);
            invlogit(line.intercept + line.slope * (x / (1.0 - x)).ln())
        })
        .sum::<f64>()
        / strata as f64
}

/// Asymptotic Kolmogorov–Smirnov p-value against U(0, 1).
fn ks_pvalue(sample: &[f64]) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

#[test]
fn c7_property_suites() {
    let mut c = Checks::new("c7 property suites");
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let worst = (0..50)
        .map(|_| {
            let line = SrocLine { intercept: rng.random_range(-3.0..3.0), slope: rng.random_range(-2.0..2.0) };
            (line_auc(&line, FprRange::FULL).unwrap() - stratified_auc(&line, 200_000, &mut rng)).abs()
        })
        .fold(0.0, f64::max);
    c.check(format!("trapezoid vs stratified monte carlo, worst {worst:.2e} < 2e-3"), worst < 2e-3);

    for s in [0.1f64, 0.5, 0.83] {
        let line = SrocLine { intercept: (s / (1.0 - s)).ln(), slope: 0.0 };
        let a = line_auc(&line, FprRange::FULL).unwrap();
        c.check(format!("constant sensitivity {s}: auc {a:.6}"), (a - s).abs() < 1e-9);
    }
    let identity = line_auc(&SrocLine { intercept: 0.0, slope: 1.0 }, FprRange::FULL).unwrap();
    c.check(format!("identity line auc {identity:.6}"), (identity - 0.5).abs() < 1e-3);

    let mut ssr_ok = true;
    for _ in 0..1000 {
        let y = table_logits(rng.random_range(0..50), rng.random_range(0..50), rng.random_range(0..50), rng.random_range(0..50));
        let (va, vb): (f64, f64) = (rng.random_range(0.05..3.0), rng.random_range(0.05..3.0));
        let cab = rng.random_range(-0.95..0.95) * (va * vb).sqrt();
        let m = PredictiveMoments {
            mean: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
            cov: [[va, cab], [cab, vb]],
            mean_log_dor: rng.random_range(-3.0..3.0),
            var_log_dor: va + vb - 2.0 * cab,
            n_replicates: 1000,
        };
        let r = standardized_residuals(&y, y.log_dor(), &m).unwrap();
        ssr_ok &= r.ssr.is_some_and(|s| s >= 0.0);
        let mut at_mean = y;
        (at_mean.y_a, at_mean.y_b) = (m.mean[0], m.mean[1]);
        let r0 = standardized_residuals(&at_mean, m.mean_log_dor, &m).unwrap();
        ssr_ok &= r0.ssr == Some(0.0);
    }
    let records = &fixture().bundle.report.analysis.records;
    ssr_ok &= records.iter().all(|r| r.ssr.is_some_and(|s| s >= 0.0));
    c.check("ssr >= 0 everywhere and 0 at the predictive mean", ssr_ok);

    let (calibration, ssr_rate) = null_calibration();
    for (family, p) in calibration {
        c.check(format!("null ks {family} p {p:.4} > 0.01"), p > 0.01);
    }
    c.within("null ssr flag rate", ssr_rate, 0.10, 0.04);

    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(data_path(), dir.path().join("again"));
    config.figures = true;
    let again = cmd_analyze(&config).unwrap();
    let first = &fixture().bundle;
    c.check("same-seed manifests identical", again.manifest == first.manifest);
    let identical = first
        .manifest
        .files
        .keys()
        .all(|name| fs::read(first.dir.join(name)).unwrap() == fs::read(again.dir.join(name)).unwrap());
    c.check("same-seed bundle files byte-identical", identical);
    c.finish();
}

/// Reduced-setting replications simulated from the fitted posterior means
/// with the Table 1 study sizes. Returns the KS p-value per p-value family,
/// using study `r mod 20` of replication `r`, and the SSR flag rate over all
/// studies.
fn null_calibration() -> (Vec<(&'static str, f64)>, f64) {
    const REPS: usize = 200;
    let d = table1();
    let truth = posterior_means(&fixture().bundle.report.analysis.full.summary).unwrap();
    let sizes: Vec<(u64, u64)> = d.studies().iter().map(|s| (s.n_a(), s.n_b())).collect();
    let options = AnalysisOptions { outer_draws: 200, inner_reps: 50, ..AnalysisOptions::default() };
    let thresholds = Thresholds::default();
    let mut families: [(&str, Vec<f64>); 5] =
        [("p_a", vec![]), ("p_b", vec![]), ("p_sd", vec![]), ("p_ad", vec![]), ("p_dor", vec![])];
    let (mut flagged, mut total) = (0usize, 0usize);
    for r in 0..REPS {
        let sim = simulate_dataset(&truth, &sizes, 0x5eed + r as u64).unwrap();
        let config = McmcConfig { iterations: 3000, burn_in: 1000, thin: 4, chains: 1, seed: 1 + r as u64, ..McmcConfig::default() };
        let result = run_full_analysis_with(&sim, &PriorSpec::default(), &config, &thresholds, &options).unwrap();
        for rec in &result.records {
            total += 1;
            flagged += usize::from(rec.flags.ssr);
        }
        if let Some(rec) = result.record((r % sizes.len()) as u32 + 1) {
            let values = [Some(rec.p_a), Some(rec.p_b), rec.p_sd, Some(rec.p_ad), Some(rec.p_dor)];
            for ((_, sample), v) in families.iter_mut().zip(values) {
                sample.extend(v);
            }
        }
    }
    let ks = families.iter().map(|(name, sample)| (*name, ks_pvalue(sample))).collect();
    (ks, flagged as f64 / total as f64)
}

#[test]
fn c8_zero_cell_study() {
    let analysis = &fixture().bundle.report.analysis;
    let s9 = record(9);
    let mut c = Checks::new("c8 zero-cell study 9");
    c.check("no failed fits", analysis.failures.is_empty());
    c.check("leave-one-out fit for study 9 present", analysis.loo_fits.iter().any(|f| f.study == 9));
    let values = [
        s9.rd_a, s9.rd_b, s9.srd, s9.ard, s9.rd_dor, s9.sr_a, s9.sr_b, s9.sr_dor, s9.asr, s9.p_a, s9.p_b, s9.p_ad,
        s9.p_dor, s9.delta_auc,
    ];
    c.check("all scalar statistics finite", values.iter().all(|v| v.is_finite()));
    c.check(format!("ssr present and finite: {:?}", s9.ssr), s9.ssr.is_some_and(f64::is_finite));
    c.check(format!("p_sd present and finite: {:?}", s9.p_sd), s9.p_sd.is_some_and(f64::is_finite));
    let csv = fs::read_to_string(fixture().bundle.dir.join("diagnostics.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("9,")).unwrap();
    let lower = row.to_ascii_lowercase();
    c.check("diagnostics row has no nan or inf", !lower.contains("nan") && !lower.contains("inf"));
    c.finish();
}
