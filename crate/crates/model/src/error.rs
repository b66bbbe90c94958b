use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] sal360_core::Error),

    #[error(transparent)]
    Tensor(#[from] sal360_autodiff::Error),

    #[error("invalid input: {0}")]
    InputDomain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for losses that cannot be evaluated on a sample (flat maps).
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Core(sal360_core::Error::Degenerate(_)))
    }
}
