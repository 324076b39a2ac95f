use thiserror::Error;

/// Errors raised by tensor math and the autodiff tape.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("fully masked softmax row {row}: every row must keep at least self-attention")]
    FullyMaskedRow { row: usize },
    #[error("invalid mask entry {value} (entries must be 0 or -inf)")]
    InvalidMaskEntry { value: f64 },
    #[error("state error: {0}")]
    State(String),
}

/// Errors raised by model assembly and the data pipeline.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
