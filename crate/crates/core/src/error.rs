use thiserror::Error;

/// Errors produced by the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error in {section}: {message}")]
    Format { section: &'static str, message: String },

    #[error("bitstream truncated or corrupt at byte {offset}: {message}")]
    Corrupt { offset: usize, message: String },

    #[error("training diverged at iteration {iteration}: {message}")]
    Training { iteration: u64, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(section: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            section,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
