use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Factorization, conditioning or other floating-point failure.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The operation is only defined for a narrower class of models
    /// (for example, diagonal noise covariance).
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("insufficient data: {usable} usable checkpoints, need at least {required}")]
    InsufficientData { usable: usize, required: usize },

    /// Semantically invalid configuration (caught before any heavy work).
    #[error("config error: {0}")]
    Config(String),

    /// Structurally invalid configuration document.
    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Config(_) => 2,
            Error::Numeric(_) => 3,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
