use thiserror::Error;

/// Errors raised by the library.
///
/// The variants fall into two families that the command-line front end maps
/// to distinct exit codes: caller mistakes (`Usage`, `Capacity`) and bad
/// input data (everything else).
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),
    #[error("cannot tokenize word {word:?} with the given vocabulary")]
    Tokenization { word: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for errors caused by how the API was called rather than by the
    /// content of the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_) | Error::Capacity(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
