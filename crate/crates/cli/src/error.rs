use std::path::PathBuf;

use dta_influence::Error as CoreError;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION_FAILED: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const FIT_FAILURE: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid input: {0}")]
    Input(#[source] CoreError),

    #[error("model fit failed: {0}")]
    Fit(#[source] CoreError),

    #[error("{} of {total} leave-one-out fits failed; partial bundle written", failed.len())]
    PartialFit { failed: Vec<u32>, total: usize },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sampler validation failed")]
    ValidationFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) | CliError::Output { .. } => exit::INVALID_INPUT,
            CliError::Fit(_) | CliError::PartialFit { .. } => exit::FIT_FAILURE,
            CliError::ValidationFailed => exit::VALIDATION_FAILED,
        }
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.into(),
            source,
        }
    }
}

/// Sorts a core error into bad input versus a failed fit.
impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { .. }
            | CoreError::Header { .. }
            | CoreError::Row { .. }
            | CoreError::Field { .. }
            | CoreError::Dataset(_)
            | CoreError::UnknownStudy(_)
            | CoreError::Params(_)
            | CoreError::Config(_) => CliError::Input(e),
            _ => CliError::Fit(e),
        }
    }
}
