use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's preconditions.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid hyperparameters or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A factorisation or other numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Malformed or inconsistent input data.
    #[error("{}:{line}: {msg}", file.display())]
    Data {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn data(file: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures caused by numerics rather than by inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
