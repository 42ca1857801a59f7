use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameter.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Non-finite value found in an input panel.
    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("insufficient data: need at least {required}, got {actual} ({what})")]
    InsufficientData {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    /// Malformed input data (CSV rows, duplicate cells, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: asymmetric kernel, non-positive trace, singular system.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Failure inside one Monte-Carlo replication.
    #[error("replication {replication} (seed {seed}) failed: {source}")]
    Replication {
        replication: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::NonFinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::InsufficientData { .. }
            | Error::Data(_)
            | Error::Csv(_)
            | Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
            Error::Replication { source, .. } => source.exit_code(),
        }
    }
}
