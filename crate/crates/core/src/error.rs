use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Arguments live on different spaces.
    #[error("space mismatch: left has {left} points, right has {right}")]
    SpaceMismatch { left: usize, right: usize },

    /// The caller violated a precondition (bad index, empty list, nonpositive delta...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A point is outside the region where the operation is defined
    /// (not in the algebraic interior, `+∞` at the target...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The functional is `+∞` everywhere that was tried, or nothing admissible exists.
    #[error("degenerate problem: {0}")]
    Degenerate(String),

    /// A representation could not be certified.
    #[error("certification failed: {0}")]
    Certification(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
