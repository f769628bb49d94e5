use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator and its experiment drivers.
#[derive(Debug, Error)]
pub enum HmError {
    #[error("index out of supported range: {0}")]
    Range(String),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HmError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HmError> = std::result::Result<T, E>;
