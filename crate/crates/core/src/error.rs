use std::io;

use thiserror::Error;

/// Every failure the library reports. Variants map onto the stage that
/// detected the problem so the CLI can pick an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data: {0}")]
    Corruption(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown name: {0}")]
    Lookup(String),
    #[error("mining error: {0}")]
    Mining(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("bagging error: {0}")]
    Bagging(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for this error: 2 for I/O, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
