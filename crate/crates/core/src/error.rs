use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quantile knots: {0}")]
    InvalidKnots(String),
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("matrix not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("series too short: need at least {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("context too short: need at least {needed} values, got {got}")]
    ContextTooShort { needed: usize, got: usize },
    #[error("no external forecast for series {series_id:?} at context length {context_length}")]
    MissingExternalForecast {
        series_id: String,
        context_length: usize,
    },
    #[error("horizon mismatch: expected {expected}, got {got}")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("need at least 2 sample paths, got {0}")]
    TooFewPaths(usize),
    #[error("no series with a positive baseline score in common")]
    NoComparableSeries,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset has no usable series")]
    EmptyDataset,
    #[error("series {series_id:?} contains negative values (pass allow-negative to disable truncation)")]
    NegativeValues { series_id: String },
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
