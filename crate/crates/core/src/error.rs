use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("not an MSVB1 file (bad magic)")]
    BadMagic,

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("declared dimensions overflow: {0}")]
    DimensionOverflow(String),

    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("chunk {chunk} has {active} active streams but the state space only covers up to {max}")]
    NoAllowedState { chunk: usize, active: usize, max: usize },

    #[error("chunk {0} has no feasible state")]
    InfeasibleChunk(usize),

    #[error("all HMM states were dropped")]
    DegenerateModel,

    #[error("cannot-link constraint violated in chunk {chunk}: speaker {speaker} assigned twice")]
    ConstraintViolation { chunk: usize, speaker: usize },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("malformed RTTM line {line}: {reason}")]
    Rttm { line: usize, reason: String },

    #[error("reference contains no scored speech")]
    EmptyReference,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("recording pairing failed; missing hypothesis for [{missing_hyp}], missing reference for [{missing_ref}]")]
    Pairing {
        missing_hyp: String,
        missing_ref: String,
    },
}
