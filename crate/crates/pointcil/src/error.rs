//! Crate-wide error type.

use thiserror::Error;

/// Everything that can go wrong across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {0}: malformed point record")]
    MalformedLine(usize),
    #[error("file contains no points")]
    EmptyFile,
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid scene spec: {0}")]
    InvalidScene(String),
    #[error("invalid neighbor count: {0}")]
    InvalidK(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every label in the batch is IGNORE")]
    AllIgnored,
    #[error("prototype for class {0} is uninitialized")]
    Uninitialized(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("class subset is empty")]
    EmptySubset,
    #[error("class {0} has no points in the cloud")]
    ClassAbsent(usize),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{0}` is out of range")]
    OutOfRange(String),
    #[error("missing required config key `{0}`")]
    Missing(String),
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: 1 for configuration
    /// problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownKey(_)
            | Error::OutOfRange(_)
            | Error::Missing(_)
            | Error::InvalidPlan(_)
            | Error::InvalidConfig(_)
            | Error::InvalidScene(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
