//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A requested output dimension exceeds what the data supports.
    #[error("requested dimension {requested} exceeds achievable {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration problem, with the offending field path.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// Failure inside the collaboration protocol, tagged with the step of
    /// the one-path training algorithm that raised it.
    #[error("protocol step {step} failed: {source}")]
    Protocol {
        step: u8,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn at_step(self, step: u8) -> Self {
        Error::Protocol {
            step,
            source: Box::new(self),
        }
    }
}
