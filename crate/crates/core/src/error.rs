use std::io;

/// Errors shared by every module in the crate.
///
/// The split matters for the CLI: argument and format problems map to usage
/// failures, everything else to runtime failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed file contents: bad magic, truncated payload, inconsistent
    /// per-vector dimension, values outside the representable range.
    #[error("format error: {0}")]
    Format(String),

    /// An argument violates a documented precondition (k > n, empty dataset,
    /// mismatched dimensions, r = 0, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An optimizer or encoder produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The index or model on disk is internally inconsistent.
    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }
}
