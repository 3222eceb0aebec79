use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the regression library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular system in {0}")]
    Singular(&'static str),

    /// Pearson correlation is undefined because one of the vectors is constant.
    #[error("correlation undefined: {0} vector is constant")]
    UndefinedCorrelation(&'static str),

    #[error("malformed dataset file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
