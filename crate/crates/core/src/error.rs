use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no valid rows for series {series:?}")]
    NoValidRows { series: String },

    #[error("timestamps not strictly increasing after averaging at index {index}")]
    NonMonotonicTimestamps { index: usize },

    #[error("gap of {gap_s} s at t={at} exceeds {max_intervals} sampling intervals")]
    GapTooLarge {
        at: i64,
        gap_s: i64,
        max_intervals: i64,
    },

    #[error("zero variance: series cannot be standardized")]
    ZeroVariance,

    #[error("invalid normalization statistics (mean {mean}, std {std})")]
    InvalidStats { mean: f64, std: f64 },

    #[error("series too short: need {needed} points, have {actual}")]
    SeriesTooShort { needed: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("empty training batch")]
    EmptyBatch,

    #[error("insufficient history: need {needed} points, have {actual}")]
    InsufficientHistory { needed: usize, actual: usize },

    #[error("need at least {needed} samples, have {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("negative query rate {0}")]
    NegativeQps(f64),

    #[error("allocation must be positive, got {0}")]
    ZeroAllocation(f64),

    #[error("schedule {index} has zero budget")]
    ZeroBudget { index: usize },

    #[error("schedule {index} cannot reach the reference budget within policy bounds")]
    BudgetUnreachable { index: usize },

    #[error("metric inputs: {0}")]
    MetricInput(String),

    #[error("parameter document: {0}")]
    ParamDoc(String),

    #[error("forecaster failed: {0}")]
    Forecaster(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
