use std::path::PathBuf;

use thiserror::Error;

/// Every failure surfaced by the library.
///
/// The CLI maps [`Error::Config`], [`Error::Invariant`], [`Error::Domain`] and
/// I/O problems to exit status 1 and [`Error::Numerical`] to status 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invariant violated for `{key}` = {value}: {message}")]
    Invariant {
        key: String,
        value: String,
        message: String,
    },

    #[error("{0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invariant(key: &str, value: impl std::fmt::Display, message: &str) -> Self {
        Error::Invariant {
            key: key.to_string(),
            value: value.to_string(),
            message: message.to_string(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the integrator or a solver rather than by input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
