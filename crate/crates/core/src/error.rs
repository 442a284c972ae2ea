use thiserror::Error;

/// Errors raised by dataset handling, model fitting and the diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV header must be `id,label,tp,fp,fn,tn`, found `{found}`")]
    Header { found: String },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("row {row}: field `{field}` {message}")]
    Field {
        row: usize,
        field: &'static str,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("unknown study id {0}")]
    UnknownStudy(u32),

    #[error("invalid model parameters: {0}")]
    Params(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("could not find a finite starting point after {attempts} attempts")]
    Initialization { attempts: usize },

    #[error("covariance matrix is near-singular (det = {det:e})")]
    SingularCovariance { det: f64 },

    #[error("non-positive variance {0}")]
    NonPositiveVariance(f64),

    #[error("not enough draws: {0}")]
    InsufficientDraws(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("fit for study {study} failed: {source}")]
    StudyFit {
        study: u32,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
