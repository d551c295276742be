use thiserror::Error;

/// Errors raised by the library. The CLI maps them onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Infeasible or out-of-range code/decoder parameters.
    #[error("invalid parameters: {0}")]
    Param(String),
    /// A probability query outside the support of the model (e.g. an unreachable syndrome weight).
    #[error("domain error: {0}")]
    Domain(String),
    /// Mismatched dimensions or otherwise inconsistent call.
    #[error("usage error: {0}")]
    Usage(String),
    /// Malformed textual input (matrix files, config files, CSV).
    #[error("parse error: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
