use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },

    #[error("training aborted at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("model health: {0}")]
    ModelHealth(String),

    #[error("covariance is degenerate: Cholesky failed with jitter up to {max_jitter:e}")]
    DegenerateCovariance { max_jitter: f64 },

    #[error("archive is empty")]
    EmptyArchive,

    #[error("invalid behaviour descriptor: {0}")]
    Descriptor(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
