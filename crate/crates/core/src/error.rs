use thiserror::Error;

/// Failure categories shared by every module. The CLI maps these onto exit codes.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("insufficient order: {0}")]
    InsufficientOrder(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),
    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    /// True for errors caused by asking for something outside the supported range.
    pub fn is_capability(&self) -> bool {
        matches!(self, Error::Capability(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn insufficient(what: impl Into<String>) -> Error {
    Error::InsufficientOrder(what.into())
}
