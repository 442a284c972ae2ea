//! Posterior sampling for the bivariate binomial–logit-normal random-effects
//! model.
//!
//! Each study `i` contributes `TP_i ~ Bin(n_Ai, p_Ai)` and
//! `FP_i ~ Bin(n_Bi, p_Bi)` with `(logit p_Ai, logit p_Bi) ~ N(μ, Σ)`.
//! The hyperparameters `(μ_A, μ_B, σ_A, σ_B, ρ)` receive vague priors and the
//! joint posterior is explored with adaptive random-walk
//! Metropolis-within-Gibbs (see [`run_chain`]).

mod density;
mod diagnostics;
mod kernel;
mod pooled;
mod sampler;
mod validate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use density::{log_joint, log_prior};
pub use diagnostics::{effective_sample_size, split_rhat, ParamSummary, PosteriorSummary, PARAM_NAMES, RHAT_WARN};
pub use kernel::KernelMode;
pub use pooled::{pooled_estimates, Interval, PooledEstimates};
pub use sampler::{run_chain, run_chain_with_kernel, run_mcmc, run_mcmc_with_kernel, BlockAcceptance, PosteriorChain};
pub use validate::{
    run_gaussian_target, run_sbc, sample_gaussian_target, validate_sampler, GaussianTargetReport, MomentCheck,
    SbcParamReport, SbcReport, ValidationOptions, ValidationReport,
};

/// Hyperparameters ξ of the bivariate random-effects model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu_a: f64,
    pub mu_b: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub rho: f64,
}

impl ModelParams {
    pub fn new(mu_a: f64, mu_b: f64, sigma_a: f64, sigma_b: f64, rho: f64) -> Result<Self> {
        let p = Self {
            mu_a,
            mu_b,
            sigma_a,
            sigma_b,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.mu_a, self.mu_b, self.sigma_a, self.sigma_b, self.rho];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Params(format!("non-finite value in {self:?}")));
        }
        if self.sigma_a <= 0.0 || self.sigma_b <= 0.0 {
            return Err(Error::Params(format!(
                "standard deviations must be positive (sigma_a = {}, sigma_b = {})",
                self.sigma_a, self.sigma_b
            )));
        }
        if self.rho <= -1.0 || self.rho >= 1.0 {
            return Err(Error::Params(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// Parameter values in [`PARAM_NAMES`] order.
    pub fn as_array(&self) -> [f64; 5] {
        [self.mu_a, self.mu_b, self.sigma_a, self.sigma_b, self.rho]
    }

    /// `Σ` as `[[σ_A², ρσ_Aσ_B], [ρσ_Aσ_B, σ_B²]]`.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let c = self.rho * self.sigma_a * self.sigma_b;
        [[self.sigma_a * self.sigma_a, c], [c, self.sigma_b * self.sigma_b]]
    }
}

/// Study-level effects `θ_i = (logit p_Ai, logit p_Bi)`, one pair per study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffects {
    pub theta: Vec<[f64; 2]>,
}

/// Prior hyperparameters: `μ_A, μ_B ~ N(mu_mean, mu_sd²)`,
/// `σ_A, σ_B ~ U(0, sigma_upper)`, `ρ ~ U(rho_lower, rho_upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu_mean: f64,
    pub mu_sd: f64,
    pub sigma_upper: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mu_mean: 0.0,
            mu_sd: 10.0,
            sigma_upper: 10.0,
            rho_lower: -1.0,
            rho_upper: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.mu_mean.is_finite() || !(self.mu_sd > 0.0 && self.mu_sd.is_finite()) {
            return Err(Error::Config(format!("invalid mu prior N({}, {}²)", self.mu_mean, self.mu_sd)));
        }
        if !(self.sigma_upper > 0.0 && self.sigma_upper.is_finite()) {
            return Err(Error::Config(format!("sigma_upper must be positive, got {}", self.sigma_upper)));
        }
        if !(-1.0 <= self.rho_lower && self.rho_lower < self.rho_upper && self.rho_upper <= 1.0) {
            return Err(Error::Config(format!(
                "rho bounds must satisfy -1 <= lower < upper <= 1, got ({}, {})",
                self.rho_lower, self.rho_upper
            )));
        }
        Ok(())
    }
}

/// Sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Iterations between step-size adaptations during burn-in.
    pub adapt_window: usize,
}

/// Minimum number of retained draws per chain.
pub const MIN_RETAINED: usize = 500;

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 120_000,
            burn_in: 20_000,
            thin: 10,
            chains: 3,
            seed: 20_200_917,
            adapt_window: 50,
        }
    }
}

impl McmcConfig {
    /// Short profile for smoke runs and CI.
    pub fn fast() -> Self {
        Self {
            iterations: 12_000,
            burn_in: 2_000,
            thin: 10,
            chains: 2,
            ..Self::default()
        }
    }

    pub fn retained_per_chain(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.chains == 0 || self.adapt_window == 0 {
            return Err(Error::Config(
                "iterations, thin, chains and adapt_window must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.retained_per_chain() < MIN_RETAINED {
            return Err(Error::Config(format!(
                "(iterations - burn_in) / thin = {} retained draws per chain, need at least {MIN_RETAINED}",
                self.retained_per_chain()
            )));
        }
        Ok(())
    }

    /// Same settings under a different base seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_invariants() {
        assert!(ModelParams::new(0.0, 0.0, 1.0, 1.0, 0.99).is_ok());
        assert!(ModelParams::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(0.0, 0.0, 1.0, -2.0, 0.0).is_err());
        assert!(ModelParams::new(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn covariance_layout() {
        let p = ModelParams::new(0.0, 0.0, 2.0, 3.0, 0.5).unwrap();
        assert_eq!(p.covariance(), [[4.0, 3.0], [3.0, 9.0]]);
    }

    #[test]
    fn config_defaults_and_bounds() {
        let c = McmcConfig::default();
        assert_eq!((c.iterations, c.burn_in), (120_000, 20_000));
        assert_eq!(c.retained_per_chain(), 10_000);
        c.validate().unwrap();
        McmcConfig::fast().validate().unwrap();
        assert!(McmcConfig { burn_in: 120_000, ..c }.validate().is_err());
        assert!(McmcConfig { iterations: 24_990, ..c }.validate().is_err());
        assert!(McmcConfig { chains: 0, ..c }.validate().is_err());
    }

    #[test]
    fn prior_bounds() {
        PriorSpec::default().validate().unwrap();
        let bad = PriorSpec {
            rho_lower: 0.5,
            rho_upper: 0.5,
            ..PriorSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(PriorSpec { mu_sd: 0.0, ..PriorSpec::default() }.validate().is_err());
    }
}
