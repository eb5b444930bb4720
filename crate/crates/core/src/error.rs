use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Arguments violate an operation's preconditions (shapes, ranges, parameters).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operation called on an object in the wrong state.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Malformed configuration key or value.
    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    /// Malformed data file, with 1-based line number.
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 for configuration errors, 3 for file errors,
    /// 1 for anything raised while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Json(_) => 3,
            Error::InvalidInput(_) | Error::InvalidState(_) => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
