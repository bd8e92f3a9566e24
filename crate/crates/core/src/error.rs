use thiserror::Error;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid quantization interval: {0} hundredths (minimum is 1)")]
    InvalidInterval(i64),
    #[error("invalid state count {0} (minimum is 2)")]
    InvalidStateCount(u32),
    #[error("degenerate price range: training slice is constant")]
    DegenerateRange,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("correlation undefined: zero rank variance")]
    UndefinedCorrelation,
    #[error("non-positive value where a positive one is required")]
    Domain,
    #[error("protocol error: {0}")]
    Protocol(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
