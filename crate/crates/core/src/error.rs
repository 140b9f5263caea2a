use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported Bessel order {0}: integer orders have no reflection form")]
    UnsupportedOrder(f64),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed one-hot label encoding: {0}")]
    Encoding(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("training error: {0}")]
    Training(String),

    #[error("{path}:{line}: malformed record: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("cannot normalize zero embedding for example {id}")]
    ZeroEmbedding { id: u64 },

    #[error("artifact version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("LLM client error: {0}")]
    Client(#[from] crate::icl::client::ClientError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
    Client,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_)
            | Error::UnsupportedOrder(_)
            | Error::Numerical(_)
            | Error::Convergence { .. }
            | Error::Training(_) => ErrorKind::Numerical,
            Error::Client(_) => ErrorKind::Client,
            _ => ErrorKind::Data,
        }
    }
}
