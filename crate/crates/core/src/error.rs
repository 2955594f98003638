use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A frame was pushed out of id order.
    #[error("frame {got} pushed after frame {last}")]
    Ordering { last: u64, got: u64 },

    /// A caller broke a checkout/complete protocol rule.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A trace does not belong to the scenario it is evaluated against.
    #[error("trace/scenario mismatch: {0}")]
    Mismatch(String),

    #[error("scenario parse error: {0}")]
    Scenario(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
