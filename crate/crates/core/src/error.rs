use thiserror::Error;

/// Errors raised anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside the documented domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// Request exceeds what the implementation supports (e.g. Hermite order).
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// Data is valid but carries no usable signal (zero variance, no heralds, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// A statistic is mathematically undefined for the given state.
    #[error("undefined statistic: {0}")]
    Undefined(String),

    /// Numerical breakdown (vanishing probabilities, non-finite values).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A configuration constant makes the requested computation unreliable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error("trace {index}: {source}")]
    AtTrace {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for errors caused by bad inputs or files rather than by the data itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Input(_)
            | Error::Capability(_)
            | Error::Config(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::AtTrace { source, .. } => source.is_input_error(),
            Error::Degenerate(_) | Error::Undefined(_) | Error::Numerical(_) => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
