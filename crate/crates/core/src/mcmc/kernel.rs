//! Random-walk Metropolis updates with step sizes tuned during burn-in.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub(crate) const TARGET_SCALAR: f64 = 0.44;
pub(crate) const TARGET_PAIR: f64 = 0.30;

/// Acceptance rule used by every Metropolis step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMode {
    #[default]
    Standard,
    /// Rejects every proposal. Negative control for the validation harness.
    RejectAll,
}

impl KernelMode {
    #[inline]
    pub(crate) fn accept<R: Rng + ?Sized>(self, log_ratio: f64, rng: &mut R) -> bool {
        match self {
            KernelMode::RejectAll => false,
            KernelMode::Standard => {
                if log_ratio >= 0.0 {
                    true
                } else if log_ratio.is_nan() {
                    false
                } else {
                    let u: f64 = rng.random();
                    u.ln() < log_ratio
                }
            }
        }
    }
}

/// Step-size controller: Robbins–Monro updates of a log scale toward a
/// target acceptance rate, applied once per window.
#[derive(Debug, Clone)]
pub(crate) struct Adapter {
    pub log_scale: f64,
    target: f64,
    window_accepted: usize,
    window_proposed: usize,
    windows: usize,
    pub kept_accepted: usize,
    pub kept_proposed: usize,
}

impl Adapter {
    pub fn new(scale: f64, target: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            target,
            window_accepted: 0,
            window_proposed: 0,
            windows: 0,
            kept_accepted: 0,
            kept_proposed: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn record(&mut self, accepted: bool, adapting: bool) {
        if adapting {
            self.window_proposed += 1;
            self.window_accepted += accepted as usize;
        } else {
            self.kept_proposed += 1;
            self.kept_accepted += accepted as usize;
        }
    }

    pub fn adapt(&mut self) {
        if self.window_proposed == 0 {
            return;
        }
        self.windows += 1;
        let rate = self.window_accepted as f64 / self.window_proposed as f64;
        let gain = 2.0 / (self.windows as f64).sqrt();
        self.log_scale = (self.log_scale + gain * (rate - self.target)).clamp(-12.0, 6.0);
        self.window_accepted = 0;
        self.window_proposed = 0;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.kept_proposed == 0 {
            f64::NAN
        } else {
            self.kept_accepted as f64 / self.kept_proposed as f64
        }
    }
}

/// One scalar coordinate updated by Gaussian random walk.
#[derive(Debug, Clone)]
pub(crate) struct ScalarBlock {
    pub adapter: Adapter,
}

impl ScalarBlock {
    pub fn new(scale: f64) -> Self {
        Self {
            adapter: Adapter::new(scale, TARGET_SCALAR),
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        x + self.adapter.scale() * z
    }
}

/// Streaming mean and covariance of a 2-vector.
#[derive(Debug, Clone, Default)]
pub(crate) struct PairMoments {
    n: f64,
    mean: [f64; 2],
    m2: [f64; 3],
}

impl PairMoments {
    pub fn push(&mut self, x: [f64; 2]) {
        self.n += 1.0;
        let d0 = x[0] - self.mean[0];
        let d1 = x[1] - self.mean[1];
        self.mean[0] += d0 / self.n;
        self.mean[1] += d1 / self.n;
        self.m2[0] += d0 * (x[0] - self.mean[0]);
        self.m2[1] += d0 * (x[1] - self.mean[1]);
        self.m2[2] += d1 * (x[1] - self.mean[1]);
    }

    pub fn count(&self) -> f64 {
        self.n
    }

    /// `(var0, cov01, var1)`.
    pub fn covariance(&self) -> [f64; 3] {
        let d = (self.n - 1.0).max(1.0);
        [self.m2[0] / d, self.m2[1] / d, self.m2[2] / d]
    }
}

/// A 2-d block updated by a correlated Gaussian random walk. The proposal
/// shape follows the empirical covariance seen during burn-in; the overall
/// scale is tuned toward [`TARGET_PAIR`].
#[derive(Debug, Clone)]
pub(crate) struct PairBlock {
    pub adapter: Adapter,
    /// Lower Cholesky factor `(l00, l10, l11)` of the proposal shape.
    chol: [f64; 3],
    moments: PairMoments,
}

const SHAPE_MIN_SAMPLES: f64 = 200.0;

impl PairBlock {
    pub fn new(sd: [f64; 2]) -> Self {
        Self {
            adapter: Adapter::new(2.38 / 2f64.sqrt(), TARGET_PAIR),
            chol: [sd[0], 0.0, sd[1]],
            moments: PairMoments::default(),
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: [f64; 2], rng: &mut R) -> [f64; 2] {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let s = self.adapter.scale();
        [
            x[0] + s * self.chol[0] * z0,
            x[1] + s * (self.chol[1] * z0 + self.chol[2] * z1),
        ]
    }

    pub fn observe(&mut self, x: [f64; 2]) {
        self.moments.push(x);
    }

    /// Adapts the scale and, once enough burn-in states have been seen,
    /// reshapes the proposal to the empirical covariance.
    pub fn adapt(&mut self) {
        self.adapter.adapt();
        if self.moments.count() < SHAPE_MIN_SAMPLES {
            return;
        }
        let [v0, c, v1] = self.moments.covariance();
        let v0 = v0.max(1e-10);
        let v1 = v1.max(1e-10);
        let l00 = v0.sqrt();
        let l10 = c / l00;
        let rem = v1 - l10 * l10;
        if l00.is_finite() && rem > 1e-12 * v1 && rem.is_finite() {
            self.chol = [l00, l10, rem.sqrt()];
        }
    }
}
