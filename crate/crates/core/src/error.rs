use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("capacity error: requested {requested}, available {available}")]
    Capacity { requested: usize, available: usize },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("target selection error: {0}")]
    Selection(String),

    #[error("scaling error: {0}")]
    Scaling(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
