//! Summary ROC curve implied by the bivariate model and its area.
//!
//! The curve is the regression of logit sensitivity on logit FPR,
//! `E[Y_A | Y_B] = μ_A + (ρσ_A/σ_B)(Y_B − μ_B)`, mapped back to the
//! probability scale and integrated over FPR with the trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::data::{observed_proportions, Dataset};
use crate::error::{Error, Result};
use crate::mcmc::{ModelParams, PosteriorChain};
use crate::stats::{central_interval, invlogit, logit};

pub const DEFAULT_GRID_SIZE: usize = 1000;

/// Endpoint exclusion keeping `logit(fpr)` finite.
pub const GRID_EPS: f64 = 1e-6;

/// Straight line on the logit scale: `logit(sens) = intercept + slope·logit(fpr)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrocLine {
    pub intercept: f64,
    pub slope: f64,
}

/// FPR interval over which the curve is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FprRange {
    pub lo: f64,
    pub hi: f64,
}

impl FprRange {
    pub const FULL: FprRange = FprRange { lo: 0.0, hi: 1.0 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(Error::Grid(format!("FPR range ({}, {}) is not inside [0, 1]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Smallest to largest uncorrected study FPR.
pub fn observed_fpr_range(d: &Dataset) -> Result<FprRange> {
    let fprs: Vec<f64> = d.studies().iter().map(|s| observed_proportions(s).1).collect();
    let lo = fprs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fprs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = FprRange { lo, hi };
    range.validate()?;
    Ok(range)
}

impl AucRange {
    /// Concrete FPR interval for `d`.
    pub fn resolve(&self, d: &Dataset) -> Result<FprRange> {
        match self {
            AucRange::Full => Ok(FprRange::FULL),
            AucRange::Observed => observed_fpr_range(d),
        }
    }
}

/// Which FPR range the AUC covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucRange {
    #[default]
    Full,
    /// Between the smallest and largest observed FPR.
    Observed,
}

/// Point on the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub sens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrocCurve {
    pub line: SrocLine,
    pub range: FprRange,
    pub grid: Vec<RocPoint>,
    pub auc: f64,
    /// 95% credible interval of the AUC from per-draw curves.
    pub auc_interval: Option<(f64, f64)>,
}

pub fn sroc_line(params: &ModelParams) -> Result<SrocLine> {
    if !(params.sigma_b > 0.0) {
        return Err(Error::Params(format!("sigma_b must be positive, got {}", params.sigma_b)));
    }
    let slope = params.rho * params.sigma_a / params.sigma_b;
    Ok(SrocLine {
        intercept: params.mu_a - slope * params.mu_b,
        slope,
    })
}

/// Curve evaluated on `grid_size` equispaced FPR values spanning `range`
/// with the endpoints pulled in by [`GRID_EPS`].
pub fn sroc_points(line: &SrocLine, grid_size: usize, range: FprRange) -> Result<Vec<RocPoint>> {
    range.validate()?;
    if grid_size < 2 {
        return Err(Error::Grid(format!("grid_size must be at least 2, got {grid_size}")));
    }
    let lo = range.lo.max(GRID_EPS);
    let hi = range.hi.min(1.0 - GRID_EPS);
    if lo >= hi {
        return Err(Error::Grid(format!("FPR range ({}, {}) is empty after endpoint exclusion", range.lo, range.hi)));
    }
    let step = (hi - lo) / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|k| {
            let fpr = if k == grid_size - 1 { hi } else { lo + step * k as f64 };
            RocPoint {
                fpr,
                sens: invlogit(line.intercept + line.slope * logit(fpr)),
            }
        })
        .collect())
}

/// Trapezoid integral of sensitivity over FPR across `range`; the flat
/// pieces between the range ends and the first/last grid points reuse the
/// nearest grid sensitivity. Clamped to `[0, 1]`.
pub fn auc(grid: &[RocPoint], range: FprRange) -> Result<f64> {
    range.validate()?;
    if grid.len() < 2 {
        return Err(Error::Grid("need at least two grid points".into()));
    }
    if grid.windows(2).any(|w| !(w[1].fpr > w[0].fpr)) {
        return Err(Error::Grid("FPR values must be strictly increasing".into()));
    }
    let first = grid[0];
    let last = grid[grid.len() - 1];
    if first.fpr < range.lo || last.fpr > range.hi {
        return Err(Error::Grid("grid extends outside the integration range".into()));
    }
    let inner: f64 = grid
        .windows(2)
        .map(|w| 0.5 * (w[0].sens + w[1].sens) * (w[1].fpr - w[0].fpr))
        .sum();
    let total = inner + first.sens * (first.fpr - range.lo) + last.sens * (range.hi - last.fpr);
    Ok(total.clamp(0.0, 1.0))
}

pub fn delta_auc(full_auc: f64, loo_auc: f64) -> f64 {
    full_auc - loo_auc
}

/// AUC of the line at default grid resolution.
pub fn line_auc(line: &SrocLine, range: FprRange) -> Result<f64> {
    auc(&sroc_points(line, DEFAULT_GRID_SIZE, range)?, range)
}

/// Plug-in curve at the posterior means of ξ, with a credible interval from
/// the AUC of every retained draw.
pub fn posterior_sroc(chains: &[PosteriorChain], range: FprRange) -> Result<SrocCurve> {
    let mut ordered: Vec<&PosteriorChain> = chains.iter().collect();
    ordered.sort_by_key(|c| c.chain_index);
    let draws: Vec<ModelParams> = ordered.iter().flat_map(|c| c.params.iter().copied()).collect();
    if draws.is_empty() {
        return Err(Error::InsufficientDraws("no draws for the SROC curve".into()));
    }
    let n = draws.len() as f64;
    let avg = |f: fn(&ModelParams) -> f64| draws.iter().map(f).sum::<f64>() / n;
    let means = ModelParams {
        mu_a: avg(|p| p.mu_a),
        mu_b: avg(|p| p.mu_b),
        sigma_a: avg(|p| p.sigma_a),
        sigma_b: avg(|p| p.sigma_b),
        rho: avg(|p| p.rho),
    };
    let mut curve = sroc_curve(&means, range)?;
    use rayon::prelude::*;
    let aucs = draws
        .par_iter()
        .map(|p| line_auc(&sroc_line(p)?, range))
        .collect::<Result<Vec<f64>>>()?;
    curve.auc_interval = Some(central_interval(&aucs));
    Ok(curve)
}

/// Plug-in curve for a fixed parameter vector.
pub fn sroc_curve(params: &ModelParams, range: FprRange) -> Result<SrocCurve> {
    let line = sroc_line(params)?;
    let grid = sroc_points(&line, DEFAULT_GRID_SIZE, range)?;
    let auc = auc(&grid, range)?;
    Ok(SrocCurve {
        line,
        range,
        grid,
        auc,
        auc_interval: None,
    })
}
