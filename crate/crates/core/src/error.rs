use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum DsdError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular matrix (pivot {pivot:e} below threshold {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("singular character matrix at position {index}")]
    SingularAt { index: usize },

    #[error("unknown character {0:?}")]
    UnknownCharacter(char),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("sequence of length {len} is shorter than the minimum lattice path {min}")]
    TooShort { len: usize, min: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("optimizer stopped after {iterations} iterations without converging (objective {objective:e})")]
    NotConverged { iterations: usize, objective: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DsdError>;
