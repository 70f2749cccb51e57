use thiserror::Error;

/// Broad error families, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Truncation,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Truncation => "truncation",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("beta index {index} out of range (model has {k} infection rates)")]
    BetaIndex { index: usize, k: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "inconsistent increments at interval {interval}: nSI = {n_si}, nIR = {n_ir} (both must be >= 0)"
    )]
    DataInconsistency {
        interval: usize,
        n_si: i64,
        n_ir: i64,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(
        "truncation error: {what} leaked mass {achieved:.3e} exceeds tolerance {tolerance:.1e}; {hint}"
    )]
    Truncation {
        what: &'static str,
        achieved: f64,
        tolerance: f64,
        hint: String,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("reconstruction failed: {0}")]
    Reconstruction(String),

    #[error("chain diagnostics: {0}")]
    Diagnostics(String),

    #[error("empty posterior sample")]
    EmptySample,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter { .. }
            | Error::BetaIndex { .. }
            | Error::Config(_)
            | Error::Json(_) => ErrorCategory::Config,
            Error::DataInconsistency { .. }
            | Error::Data(_)
            | Error::Reconstruction(_)
            | Error::Csv(_)
            | Error::Io(_) => ErrorCategory::Data,
            Error::Truncation { .. } => ErrorCategory::Truncation,
            Error::Domain(_) | Error::Numeric(_) | Error::Diagnostics(_) | Error::EmptySample => {
                ErrorCategory::Numeric
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
