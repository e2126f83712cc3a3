//! Error type shared across the crate.
//!
//! Every error carries a short machine-parsable kind tag (see
//! [`Error::kind_tag`]); the CLI prints it as `error[<tag>]: <message>`.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes are inconsistent.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter is outside its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A call violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A row in a data file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A data file's header does not match the expected schema.
    #[error("{path}: malformed header: {msg}")]
    Header { path: PathBuf, msg: String },

    /// Timestamps in a driving log are not monotone.
    #[error("{path}:{line}: non-monotone timestamp")]
    NonMonotone { path: PathBuf, line: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Training(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable tag identifying the error class, independent of the message.
    pub fn kind_tag(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Parse { .. } => "parse",
            Error::Header { .. } => "header",
            Error::NonMonotone { .. } => "monotone",
            Error::Training(_) => "training",
            Error::Io { .. } => "io",
        }
    }
}
