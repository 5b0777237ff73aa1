use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's contract.
    #[error("invalid input: {0}")]
    Input(String),
    /// The grid description is not a radial network.
    #[error("structural error: {0}")]
    Structural(String),
    /// An operation was invoked in the wrong episode phase.
    #[error("lifecycle error: {0}")]
    Lifecycle(String),
    /// Another command holds the run directory.
    #[error("run directory busy: {0}")]
    Busy(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    /// Prefixes an input error with the config field it concerns.
    pub fn in_field(self, field: &str) -> Self {
        match self {
            Error::Input(m) => Error::Input(format!("{field}: {m}")),
            Error::Structural(m) => Error::Structural(format!("{field}: {m}")),
            other => other,
        }
    }

    /// True for errors caused by bad user-provided data (as opposed to runtime failures).
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Structural(_) | Error::Json(_) | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
