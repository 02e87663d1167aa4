use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite ({context})")]
    CholeskyFailure { context: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("nudging map is not invertible (step size must be below 1/L)")]
    NotInvertible,

    #[error("step size {gamma} outside validity interval [0, {upper})")]
    InvalidStepSize { gamma: f64, upper: f64 },

    #[error("all particle weights vanished at step {step}")]
    DegenerateEnsemble { step: usize },

    #[error("state diverged at Euler iteration {iteration}")]
    DivergedState { iteration: usize },

    #[error("normalizing denominator is zero")]
    ZeroDenominator,

    #[error("path enumeration needs {paths} paths, limit is {limit}")]
    EnumerationBound { paths: u128, limit: u128 },

    #[error("invalid nudge map at time {time}: state {state} decreases the likelihood")]
    InvalidNudgeMap { time: usize, state: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}
