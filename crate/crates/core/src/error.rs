use thiserror::Error;

/// Errors raised across the simulator and learning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model descriptor: {0}")]
    InvalidModel(String),

    #[error("{what} out of range: {value} not in [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: i64,
        lo: i64,
        hi: i64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("replay buffer holds {size} transitions, cannot sample {requested}")]
    InsufficientSamples { size: usize, requested: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
