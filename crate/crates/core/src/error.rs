use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("security error: path {path:?} escapes the repository root")]
    Security { path: String },

    #[error("binary content rejected for {path}")]
    Binary { path: String },

    #[error("apply error in {path} (hunk {hunk}): {reason}")]
    Apply {
        path: String,
        hunk: usize,
        reason: String,
    },

    #[error("io error at {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("budget error: {0}")]
    Budget(String),

    #[error(transparent)]
    Generation(#[from] crate::explain::GenerationError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse_error",
            Error::Validation(_) => "validation_error",
            Error::Security { .. } => "security_error",
            Error::Binary { .. } => "binary_error",
            Error::Apply { .. } => "apply_error",
            Error::Io { .. } => "io_error",
            Error::Contract(_) => "contract_error",
            Error::NotFound(_) => "not_found",
            Error::Range(_) => "range_error",
            Error::Budget(_) => "budget_error",
            Error::Generation(_) => "generation_error",
        }
    }
}
