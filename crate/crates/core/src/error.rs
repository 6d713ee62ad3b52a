use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("transition matrix is not square ({rows} rows, row {row} has {cols} entries)")]
    NonSquare {
        rows: usize,
        row: usize,
        cols: usize,
    },

    #[error("row {row} is not a probability vector (sum {sum}, min entry {min})")]
    NonStochasticRow { row: usize, sum: f64, min: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("chain has no unique stationary distribution ({closed_classes} closed classes)")]
    NonUniqueStationary { closed_classes: usize },

    #[error("state {state} has zero stationary mass")]
    ZeroMassState { state: usize },

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("absolute continuity violated at state {state}")]
    AbsoluteContinuityViolated { state: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("budget N={n} is not a multiple of the horizon T={horizon}")]
    IndivisibleBudget { n: usize, horizon: usize },

    #[error(
        "history contains no reset, so no sample from the discounted distribution is available"
    )]
    InsufficientResets,

    #[error("bound degenerates: {0}")]
    DegenerateBound(String),

    #[error("epsilon {epsilon} outside the hard-instance regime [0, {limit}]")]
    OutOfRegime { epsilon: f64, limit: f64 },

    #[error("parameter `{name}` = {value} hits the boundary of its open interval")]
    DegenerateParam { name: &'static str, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by invalid input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_) | Error::SingularSystem)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
