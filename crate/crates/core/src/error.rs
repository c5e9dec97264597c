use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `field` is a dotted path into the document.
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("round {t} outside horizon 1..={horizon}")]
    RoundOutOfRange { t: usize, horizon: usize },

    #[error("order {m} exceeds block order {n}")]
    OrderOutOfRange { m: u32, n: u32 },

    #[error("feedback mismatch: {0}")]
    FeedbackMismatch(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("MDP is not communicating: {0}")]
    NotCommunicating(String),

    #[error("incomplete run log: {0}")]
    IncompleteLog(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Configuration problems map to exit code 2, everything else to 3.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
