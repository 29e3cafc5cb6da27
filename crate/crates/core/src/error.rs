use thiserror::Error;

/// Errors produced by surrogate construction, evaluation, and optimization.
#[derive(Debug, Error)]
pub enum Error {
    /// A design-point component lies outside its feature bounds.
    #[error("feature `{feature}` = {value} outside bounds [{lower}, {upper}]")]
    BoundsViolation {
        feature: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A requested basis would exceed the configured size cap.
    #[error("basis of {requested} terms exceeds capacity cap of {cap}")]
    Capacity { requested: usize, cap: usize },

    /// A malformed record in a data file.
    #[error("parse error at {path}:{row}:{column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    /// Fewer samples than basis terms; the least-squares problem is ill-posed.
    #[error(
        "underdetermined system: {rows} samples for {cols} basis terms; \
         use fit_lar or a smaller basis"
    )]
    Underdetermined { rows: usize, cols: usize },

    /// The design matrix is numerically rank deficient.
    #[error("ill-conditioned design matrix (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    /// Not enough data for the requested fit.
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// A model without variance cannot be decomposed into sensitivity indices.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// An optimizer was called with the wrong number of objectives.
    #[error("wrong algorithm: {expected} expected, problem has {got} objective(s)")]
    WrongAlgorithm { expected: &'static str, got: usize },

    /// A computation produced a non-finite value.
    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
