//! Study-level 2×2 tables, CSV ingestion, logit transforms and synthetic
//! datasets drawn from the bivariate generative model.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::ModelParams;
use crate::stats::invlogit;

/// Column names of the ingestion format, in order.
pub const CSV_HEADER: [&str; 6] = ["id", "label", "tp", "fp", "fn", "tn"];

/// Smallest dataset accepted for a full analysis; every leave-one-out fit
/// then keeps at least two studies.
pub const MIN_STUDIES: usize = 3;

/// One study's 2×2 table against the reference standard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub id: u32,
    pub label: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl StudyRecord {
    pub fn new(id: u32, label: impl Into<String>, tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<Self> {
        let s = Self {
            id,
            label: label.into(),
            tp,
            fp,
            fn_,
            tn,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.id == 0 {
            return Err(Error::Dataset("study ids are 1-based".into()));
        }
        if self.n_a() == 0 {
            return Err(Error::Dataset(format!("study {}: tp + fn must be at least 1", self.id)));
        }
        if self.n_b() == 0 {
            return Err(Error::Dataset(format!("study {}: fp + tn must be at least 1", self.id)));
        }
        Ok(())
    }

    /// Diseased subjects, `tp + fn`.
    pub fn n_a(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Non-diseased subjects, `fp + tn`.
    pub fn n_b(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.n_a() + self.n_b()
    }
}

/// Logit sensitivity and logit false positive rate of one study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedLogits {
    pub y_a: f64,
    pub y_b: f64,
    /// Set when a zero cell forced the 0.5 continuity correction.
    pub corrected: bool,
}

impl ObservedLogits {
    /// Observed log diagnostic odds ratio, `y_a - y_b`.
    pub fn log_dor(&self) -> f64 {
        self.y_a - self.y_b
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.y_a, self.y_b]
    }
}

/// Logits of a 2×2 table. When any cell is zero, 0.5 is added to all four
/// cells so both logits stay finite.
pub fn table_logits(tp: u64, fp: u64, fn_: u64, tn: u64) -> ObservedLogits {
    let corrected = tp == 0 || fp == 0 || fn_ == 0 || tn == 0;
    let c = if corrected { 0.5 } else { 0.0 };
    ObservedLogits {
        y_a: ((tp as f64 + c) / (fn_ as f64 + c)).ln(),
        y_b: ((fp as f64 + c) / (tn as f64 + c)).ln(),
        corrected,
    }
}

pub fn observed_logits(s: &StudyRecord) -> ObservedLogits {
    table_logits(s.tp, s.fp, s.fn_, s.tn)
}

/// Uncorrected `(sensitivity, fpr)`.
pub fn observed_proportions(s: &StudyRecord) -> (f64, f64) {
    (s.tp as f64 / s.n_a() as f64, s.fp as f64 / s.n_b() as f64)
}

/// An ordered collection of studies. Position in `studies` is the study index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    studies: Vec<StudyRecord>,
}

impl Dataset {
    /// Builds a dataset, checking every record and id uniqueness.
    /// At least one study is required; analyses impose [`MIN_STUDIES`].
    pub fn new(name: impl Into<String>, studies: Vec<StudyRecord>) -> Result<Self> {
        if studies.is_empty() {
            return Err(Error::Dataset("no studies".into()));
        }
        let mut seen = HashSet::new();
        for s in &studies {
            s.validate()?;
            if !seen.insert(s.id) {
                return Err(Error::Dataset(format!("duplicate study id {}", s.id)));
            }
        }
        Ok(Self {
            name: name.into(),
            studies,
        })
    }

    pub fn studies(&self) -> &[StudyRecord] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.studies.iter().map(|s| s.id).collect()
    }

    pub fn position(&self, id: u32) -> Option<usize> {
        self.studies.iter().position(|s| s.id == id)
    }

    pub fn get(&self, id: u32) -> Option<&StudyRecord> {
        self.studies.iter().find(|s| s.id == id)
    }

    pub fn logits(&self) -> Vec<ObservedLogits> {
        self.studies.iter().map(observed_logits).collect()
    }

    /// Removes every study whose id is in `ids`.
    pub fn without(&self, ids: &[u32]) -> Result<Self> {
        for id in ids {
            if self.position(*id).is_none() {
                return Err(Error::UnknownStudy(*id));
            }
        }
        let kept: Vec<StudyRecord> = self
            .studies
            .iter()
            .filter(|s| !ids.contains(&s.id))
            .cloned()
            .collect();
        if kept.len() < 2 {
            return Err(Error::Dataset(format!(
                "removing {} studies would leave {} (need at least 2)",
                ids.len(),
                kept.len()
            )));
        }
        Ok(Self {
            name: self.name.clone(),
            studies: kept,
        })
    }

    /// Writes the dataset in the ingestion format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Dataset(format!("CSV write failed: {e}"));
        w.write_record(CSV_HEADER).map_err(io)?;
        for s in &self.studies {
            w.write_record([
                s.id.to_string(),
                s.label.clone(),
                s.tp.to_string(),
                s.fp.to_string(),
                s.fn_.to_string(),
                s.tn.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Dataset(format!("CSV write failed: {e}")))?;
        Ok(())
    }
}

/// Dataset with study `id` removed, order of the rest preserved.
pub fn leave_one_out(d: &Dataset, id: u32) -> Result<Dataset> {
    d.without(&[id])
}

/// Reads a dataset from a CSV file with header `id,label,tp,fp,fn,tn`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&name, text.as_bytes())
}

/// Parses CSV content; row numbers in errors are file line numbers.
pub fn parse_csv(name: &str, content: &[u8]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(content);

    let header = reader
        .headers()
        .map_err(|e| Error::Row {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let found: Vec<&str> = header.iter().collect();
    if found != CSV_HEADER {
        return Err(Error::Header {
            found: found.join(","),
        });
    }

    let mut studies = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::Row {
            row: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Row {
                row,
                message: format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let id = parse_count(&record[0], row, "id")?;
        let id = u32::try_from(id)
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| Error::Field {
                row,
                field: "id",
                message: "must be a positive integer".into(),
            })?;
        if !seen.insert(id) {
            return Err(Error::Field {
                row,
                field: "id",
                message: format!("duplicate id {id}"),
            });
        }
        let tp = parse_count(&record[2], row, "tp")?;
        let fp = parse_count(&record[3], row, "fp")?;
        let fn_ = parse_count(&record[4], row, "fn")?;
        let tn = parse_count(&record[5], row, "tn")?;
        let study = StudyRecord {
            id,
            label: record[1].to_string(),
            tp,
            fp,
            fn_,
            tn,
        };
        study.validate().map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        studies.push(study);
    }

    if studies.len() < MIN_STUDIES {
        return Err(Error::Dataset(format!(
            "{} studies found, at least {MIN_STUDIES} required",
            studies.len()
        )));
    }
    Dataset::new(name, studies)
}

fn parse_count(raw: &str, row: usize, field: &'static str) -> Result<u64> {
    let value: i64 = raw.parse().map_err(|_| Error::Field {
        row,
        field,
        message: format!("is not an integer: `{raw}`"),
    })?;
    if value < 0 {
        return Err(Error::Field {
            row,
            field,
            message: format!("must be non-negative, found {value}"),
        });
    }
    Ok(value as u64)
}

/// Draws one study-level effect pair `θ ~ N(μ, Σ)`.
pub(crate) fn draw_effects<R: rand::Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> [f64; 2] {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let rho = params.rho;
    [
        params.mu_a + params.sigma_a * z1,
        params.mu_b + params.sigma_b * (rho * z1 + (1.0 - rho * rho).sqrt() * z2),
    ]
}

pub(crate) fn draw_binomial<R: rand::Rng + ?Sized>(n: u64, logit_p: f64, rng: &mut R) -> u64 {
    let p = invlogit(logit_p);
    Binomial::new(n, p).expect("probability in [0, 1]").sample(rng)
}

/// Synthetic dataset from the bivariate generative model. `sizes` holds
/// `(n_a, n_b)` per study; ids are 1-based in order.
pub fn simulate_dataset(params: &ModelParams, sizes: &[(u64, u64)], seed: u64) -> Result<Dataset> {
    params.validate()?;
    if sizes.is_empty() {
        return Err(Error::Config("at least one study size is required".into()));
    }
    if let Some(bad) = sizes.iter().position(|&(a, b)| a == 0 || b == 0) {
        return Err(Error::Config(format!("study size {} has a zero margin", bad + 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let studies = sizes
        .iter()
        .enumerate()
        .map(|(i, &(n_a, n_b))| {
            let theta = draw_effects(params, &mut rng);
            let tp = draw_binomial(n_a, theta[0], &mut rng);
            let fp = draw_binomial(n_b, theta[1], &mut rng);
            StudyRecord {
                id: i as u32 + 1,
                label: format!("sim-{}", i + 1),
                tp,
                fp,
                fn_: n_a - tp,
                tn: n_b - fp,
            }
        })
        .collect();
    Dataset::new(format!("simulated-{seed}"), studies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn study(id: u32, tp: u64, fp: u64, fn_: u64, tn: u64) -> StudyRecord {
        StudyRecord::new(id, format!("s{id}"), tp, fp, fn_, tn).unwrap()
    }

    #[test]
    fn parses_table_rows() {
        let csv = "id,label,tp,fp,fn,tn\n1,Alon (1986),7,9,11,2\n15,Morin (1999),20,41,2,7\n3,\"Calisti, (2005)\",26,31,19,71\n";
        let d = parse_csv("t", csv.as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        let s1 = &d.studies()[0];
        assert_eq!((s1.tp, s1.fp, s1.fn_, s1.tn), (7, 9, 11, 2));
        assert_eq!((s1.n_a(), s1.n_b()), (18, 11));
        let (sens, fpr) = observed_proportions(&d.studies()[1]);
        assert_abs_diff_eq!(sens, 20.0 / 22.0);
        assert_abs_diff_eq!(sens, 0.91, epsilon = 0.005);
        assert_abs_diff_eq!(fpr, 0.85, epsilon = 0.005);
        assert_eq!(d.studies()[2].label, "Calisti, (2005)");
        assert_eq!(d.ids(), vec![1, 15, 3]);
    }

    #[test]
    fn negative_count_names_row_and_field() {
        let csv = "id,label,tp,fp,fn,tn\n1,a,1,1,1,1\n2,b,-1,1,1,1\n3,c,1,1,1,1\n";
        let err = parse_csv("t", csv.as_bytes()).unwrap_err();
        match err {
            Error::Field { row, field, .. } => {
                assert_eq!(row, 3);
                assert_eq!(field, "tp");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_input() {
        let cases = [
            "id,label,tp,fp,fn\n1,a,1,1,1\n2,b,1,1,1\n3,c,1,1,1\n",
            "id,label,tp,fp,fn,tn\n1,a,1,1,1,1\n2,b,1,1,1\n3,c,1,1,1,1\n",
            "id,label,tp,fp,fn,tn\n1,a,1,1,1,1\n2,b,1,1,1,1,9\n3,c,1,1,1,1\n",
            "id,label,tp,fp,fn,tn\n1,a,1,1.5,1,1\n2,b,1,1,1,1\n3,c,1,1,1,1\n",
            "id,label,tp,fp,fn,tn\n1,a,1,1,1,1\n1,b,1,1,1,1\n3,c,1,1,1,1\n",
            "id,label,tp,fp,fn,tn\n1,a,1,1,1,1\n2,b,1,1,1,1\n",
            "id,label,tp,fp,fn,tn\n1,a,0,1,0,1\n2,b,1,1,1,1\n3,c,1,1,1,1\n",
            "id,label,tp,fp,fn,tn\n0,a,1,1,1,1\n2,b,1,1,1,1\n3,c,1,1,1,1\n",
        ];
        for c in cases {
            assert!(parse_csv("t", c.as_bytes()).is_err(), "accepted {c:?}");
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_csv("/nonexistent/x.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn logits_examples() {
        assert_eq!(observed_logits(&study(1, 9, 3, 9, 4)).y_a, 0.0);
        let l = observed_logits(&study(1, 7, 9, 11, 2));
        assert_abs_diff_eq!(l.y_a, -0.4520, epsilon = 1e-4);
        assert!(!l.corrected);
        let l = observed_logits(&study(9, 9, 0, 6, 37));
        assert!(l.corrected);
        assert_abs_diff_eq!(l.y_b, (0.5f64 / 37.5).ln());
        assert_abs_diff_eq!(l.y_b, -4.3175, epsilon = 1e-4);
        assert_abs_diff_eq!(l.y_a, (9.5f64 / 6.5).ln());
    }

    #[test]
    fn proportions_examples() {
        let (s, f) = observed_proportions(&study(1, 7, 9, 11, 2));
        assert_abs_diff_eq!(s, 0.389, epsilon = 5e-4);
        assert_abs_diff_eq!(f, 0.818, epsilon = 5e-4);
        assert_eq!(observed_proportions(&study(2, 0, 1, 5, 1)).0, 0.0);
        let (s, f) = observed_proportions(&study(20, 40, 96, 20, 64));
        assert_abs_diff_eq!(s, 0.667, epsilon = 5e-4);
        assert_abs_diff_eq!(f, 0.600, epsilon = 5e-4);
    }

    #[test]
    fn leave_one_out_examples() {
        let d = Dataset::new(
            "t",
            (1..=20).map(|i| study(i, 5, 5, 5, 5)).collect(),
        )
        .unwrap();
        let loo = leave_one_out(&d, 7).unwrap();
        assert_eq!(loo.len(), 19);
        assert!(loo.get(7).is_none());
        assert_eq!(loo.ids(), (1..=20).filter(|&i| i != 7).collect::<Vec<_>>());

        let once = leave_one_out(&d, 1).unwrap();
        assert!(matches!(leave_one_out(&once, 1), Err(Error::UnknownStudy(1))));

        let small = Dataset::new("s", vec![study(1, 1, 1, 1, 1), study(2, 1, 1, 1, 1), study(3, 1, 1, 1, 1)]).unwrap();
        let two = leave_one_out(&small, 2).unwrap();
        assert_eq!(two.ids(), vec![1, 3]);
        assert!(leave_one_out(&two, 1).is_err());
    }

    #[test]
    fn simulate_degenerate_mean() {
        let p = ModelParams::new(0.0, 0.0, 1e-9, 1e-9, 0.0).unwrap();
        let d = simulate_dataset(&p, &[(1_000_000, 1_000_000)], 3).unwrap();
        let (sens, fpr) = observed_proportions(&d.studies()[0]);
        assert_abs_diff_eq!(sens, 0.5, epsilon = 0.002);
        assert_abs_diff_eq!(fpr, 0.5, epsilon = 0.002);
    }

    #[test]
    fn simulate_is_deterministic() {
        let p = ModelParams::new(0.3, -1.0, 0.8, 1.1, 0.4).unwrap();
        let sizes = vec![(30, 70); 12];
        assert_eq!(simulate_dataset(&p, &sizes, 11).unwrap(), simulate_dataset(&p, &sizes, 11).unwrap());
        assert_ne!(simulate_dataset(&p, &sizes, 11).unwrap(), simulate_dataset(&p, &sizes, 12).unwrap());
    }

    #[test]
    fn simulate_rejects_bad_input() {
        let p = ModelParams::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!(simulate_dataset(&p, &[(0, 5)], 1).is_err());
        let bad = ModelParams {
            mu_a: 0.0,
            mu_b: 0.0,
            sigma_a: -1.0,
            sigma_b: 1.0,
            rho: 0.0,
        };
        assert!(simulate_dataset(&bad, &[(5, 5)], 1).is_err());
    }

    #[test]
    fn simulate_mean_logit_matches_generating_mean() {
        // Monte Carlo oracle: mean of logit(TP/n) over many large studies
        // sits at mu_a, its standard error is about sigma / sqrt(10^4) = 0.01.
        let p = ModelParams::new(2.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let d = simulate_dataset(&p, &vec![(10_000, 10); 10_000], 5).unwrap();
        let ys: Vec<f64> = d.studies().iter().map(|s| observed_logits(s).y_a).collect();
        assert_abs_diff_eq!(crate::stats::mean(&ys), 2.0, epsilon = 0.05);
    }

    #[test]
    fn zero_variance_pooled_proportions_converge() {
        let p = ModelParams::new(-1.0, 0.5, 1e-9, 1e-9, 0.0).unwrap();
        let mut last = f64::INFINITY;
        for n in [100u64, 10_000, 1_000_000] {
            let d = simulate_dataset(&p, &vec![(n, n); 5], 9).unwrap();
            let tp: u64 = d.studies().iter().map(|s| s.tp).sum();
            let fp: u64 = d.studies().iter().map(|s| s.fp).sum();
            let na: u64 = d.studies().iter().map(|s| s.n_a()).sum();
            let nb: u64 = d.studies().iter().map(|s| s.n_b()).sum();
            let err = (crate::stats::logit(tp as f64 / na as f64) + 1.0).abs()
                + (crate::stats::logit(fp as f64 / nb as f64) - 0.5).abs();
            assert!(err < last.max(0.05));
            last = err;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn csv_round_trip() {
        let p = ModelParams::new(0.0, -1.0, 0.5, 0.5, 0.2).unwrap();
        let d = simulate_dataset(&p, &vec![(40, 60); 6], 4).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = parse_csv(&d.name, &buf).unwrap();
        assert_eq!(back.studies(), d.studies());
    }

    proptest! {
        #[test]
        fn logit_increasing_in_tp(n_a in 1u64..200, fp in 0u64..50, tn in 1u64..50, tp in 0u64..199) {
            prop_assume!(tp < n_a);
            let lo = table_logits(tp, fp, n_a - tp, tn);
            let hi = table_logits(tp + 1, fp, n_a - tp - 1, tn);
            prop_assert!(hi.y_a > lo.y_a);
        }

        #[test]
        fn uncorrected_logit_inverts_to_proportion(tp in 1u64..500, fp in 1u64..500, fn_ in 1u64..500, tn in 1u64..500) {
            let s = study(1, tp, fp, fn_, tn);
            let l = observed_logits(&s);
            let (sens, fpr) = observed_proportions(&s);
            prop_assert!(!l.corrected);
            prop_assert!((crate::stats::invlogit(l.y_a) - sens).abs() < 1e-12);
            prop_assert!((crate::stats::invlogit(l.y_b) - fpr).abs() < 1e-12);
        }
    }
}
