//! Bayesian bivariate random-effects meta-analysis of diagnostic test
//! accuracy, with leave-one-out influence measures, posterior-predictive
//! outlier checks and summary ROC analysis.

pub mod data;
pub mod error;
pub mod influence;
pub mod mcmc;
pub mod predictive;
pub mod sroc;
pub mod stats;

pub use error::{Error, Result};
