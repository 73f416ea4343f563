use thiserror::Error;

/// Errors produced by the deautoconvolution kernels and the fitting loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("signal must have at least one entry")]
    Empty,

    #[error("entry {index} is {value}, expected a finite nonnegative real")]
    InvalidEntry { index: usize, value: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate denominator at index {index} (value {value:e})")]
    DegenerateDenominator { index: usize, value: f64 },

    #[error("system is infeasible: S^2 = {s_squared:e}")]
    Infeasible { s_squared: f64 },

    #[error(
        "closed-form and recursive solutions disagree at index {index}: {closed} vs {recursive}"
    )]
    SolverDisagreement {
        index: usize,
        closed: f64,
        recursive: f64,
    },

    #[error("divergence is not finite at the initial point")]
    InfiniteDivergence,

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("validation failed at iteration {iteration}: {what}")]
    Validation { iteration: usize, what: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Strips [`Error::Iteration`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
