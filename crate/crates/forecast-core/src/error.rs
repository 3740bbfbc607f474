use alloc::string::String;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The series has too few observations for the requested operation.
    #[error("series too short: have {have} observations, need at least {need}")]
    SeriesTooShort { have: usize, need: usize },

    /// Min-max normalization is undefined when max equals min.
    #[error("degenerate normalization range: min == max == {value}")]
    DegenerateRange { value: f64 },

    /// Lag count does not leave room for a single training sample.
    #[error("lag {lag} too large for series of length {len}")]
    LagTooLarge { lag: usize, len: usize },

    /// The ADF design matrix is rank-deficient.
    #[error("singular regression: design matrix is rank-deficient")]
    SingularRegression,

    /// Vector length differs from what the receiver expects.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Cholesky factorization failed even after jitter escalation.
    #[error("cholesky failure: matrix not positive-definite at jitter {jitter}")]
    CholeskyFailure { jitter: f64 },

    /// A point lies outside the search-space bounds.
    #[error("coordinate {value} out of bounds [{lower}, {upper}] in dimension {dim}")]
    OutOfBounds {
        dim: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// Training produced a non-finite loss or parameter.
    #[error("non-finite loss encountered during training")]
    NonFiniteLoss,

    /// Not enough history to fill the first input window.
    #[error("history too short: have {have} observations, lag is {lag}")]
    HistoryTooShort { have: usize, lag: usize },

    /// Paired inputs have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// An operation received an empty input.
    #[error("empty input")]
    EmptyInput,

    /// The named reference model is absent from the comparison table.
    #[error("unknown reference model: {0}")]
    UnknownReference(String),

    /// A special function was evaluated outside its domain.
    #[error("domain error: {0}")]
    DomainError(&'static str),

    /// Every objective evaluation in a BO run failed.
    #[error("all objective evaluations failed")]
    AllEvaluationsFailed,

    /// The pipeline could not produce a forecast.
    #[error("pipeline failed: {0}")]
    PipelineFailed(String),

    /// Malformed model serialization payload.
    #[error("model deserialization failed: {0}")]
    ModelFormat(String),

    /// Too few datasets or models for the requested statistical test.
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
