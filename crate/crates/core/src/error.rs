use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("index {index} out of bounds for {len} {what}")]
    Bounds { what: &'static str, index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }
}
