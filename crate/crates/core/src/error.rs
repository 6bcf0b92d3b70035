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

    #[error("config does not match schema: {0}")]
    Schema(#[from] serde_json::Error),

    #[error("invalid config value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("degenerate PER fit: {0}")]
    DegenerateFit(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("task setup: {0}")]
    TaskSetup(String),

    #[error("local training diverged: {0}")]
    Divergence(String),

    #[error("no updates to aggregate")]
    EmptyAggregation,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("mission budget exhausted ({remaining:.3} m left, round needs {needed:.3} m)")]
    BudgetExhausted { remaining: f64, needed: f64 },
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
