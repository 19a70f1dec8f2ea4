use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violated a documented invariant.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    /// The estimator window has not filled yet.
    #[error("estimator warming up: {have} of {need} samples")]
    WarmingUp { have: usize, need: usize },

    #[error("out-of-order sample: expected t = {expected}, got t = {got}")]
    OutOfOrder { expected: f64, got: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
