use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside the operation's domain (bad indices, mismatched grids).
    #[error("invalid input: {0}")]
    InputDomain(String),

    /// Data that violates a content invariant (non-finite values, empty traces).
    #[error("data error: {0}")]
    Data(String),

    /// A loss is undefined for this sample (e.g. zero variance).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A metric is undefined for this frame.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
