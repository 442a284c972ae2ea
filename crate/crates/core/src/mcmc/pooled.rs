use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{central_interval, invlogit};

use super::PosteriorChain;

/// Point estimate with a 95% central credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Summary accuracy measures of one fit. Point estimates are plug-in
/// transforms of the posterior means of `μ_A` and `μ_B`; intervals are
/// quantiles of the per-draw transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimates {
    pub mu_a: f64,
    pub mu_b: f64,
    /// Pooled sensitivity.
    pub eta_a: Interval,
    /// Pooled false positive rate.
    pub eta_b: Interval,
    pub dor: Interval,
    pub lr_pos: Interval,
    pub lr_neg: Interval,
}

impl PooledEstimates {
    /// Builds the point estimates from posterior means alone, with
    /// degenerate intervals.
    pub fn from_means(mu_a: f64, mu_b: f64) -> Self {
        let (eta_a, eta_b) = (invlogit(mu_a), invlogit(mu_b));
        let point = |v: f64| Interval {
            estimate: v,
            lower: v,
            upper: v,
        };
        let lr_pos = eta_a / eta_b;
        let lr_neg = (1.0 - eta_a) / (1.0 - eta_b);
        Self {
            mu_a,
            mu_b,
            eta_a: point(eta_a),
            eta_b: point(eta_b),
            dor: point(lr_pos / lr_neg),
            lr_pos: point(lr_pos),
            lr_neg: point(lr_neg),
        }
    }
}

pub fn pooled_estimates(chains: &[PosteriorChain]) -> Result<PooledEstimates> {
    let mut ordered: Vec<&PosteriorChain> = chains.iter().collect();
    ordered.sort_by_key(|c| c.chain_index);
    let draws: Vec<_> = ordered.iter().flat_map(|c| c.params.iter()).collect();
    if draws.is_empty() {
        return Err(Error::InsufficientDraws("no posterior draws to pool".into()));
    }
    let n = draws.len() as f64;
    let mu_a = draws.iter().map(|p| p.mu_a).sum::<f64>() / n;
    let mu_b = draws.iter().map(|p| p.mu_b).sum::<f64>() / n;
    let point = PooledEstimates::from_means(mu_a, mu_b);

    let per_draw = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        draws.iter().map(|p| f(invlogit(p.mu_a), invlogit(p.mu_b))).collect()
    };
    let with_interval = |estimate: f64, xs: Vec<f64>| {
        let (lower, upper) = central_interval(&xs);
        Interval { estimate, lower, upper }
    };
    Ok(PooledEstimates {
        mu_a,
        mu_b,
        eta_a: with_interval(point.eta_a.estimate, per_draw(&|a, _| a)),
        eta_b: with_interval(point.eta_b.estimate, per_draw(&|_, b| b)),
        dor: with_interval(
            point.dor.estimate,
            draws.iter().map(|p| (p.mu_a - p.mu_b).exp()).collect(),
        ),
        lr_pos: with_interval(point.lr_pos.estimate, per_draw(&|a, b| a / b)),
        lr_neg: with_interval(point.lr_neg.estimate, per_draw(&|a, b| (1.0 - a) / (1.0 - b))),
    })
}
