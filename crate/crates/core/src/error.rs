//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed an argument outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A requested computation exceeds a configured memory or enumeration budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),

    /// An internal cross-check failed; indicates a bug, never bad input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    /// A cache file exists but does not parse, or disagrees with itself.
    #[error("cache corrupt: {0}")]
    CacheCorrupt(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
