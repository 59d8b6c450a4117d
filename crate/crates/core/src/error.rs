use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("environment contract violation: {0}")]
    Contract(String),

    #[error("state space too large: {0}")]
    Capacity(String),

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed artifact {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
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

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Shape(_)
            | Error::Usage(_)
            | Error::Contract(_)
            | Error::Capacity(_)
            | Error::NotReady(_) => 2,
            Error::Format { .. } | Error::Io { .. } => 3,
            Error::NonFinite(_) => 4,
        }
    }
}
