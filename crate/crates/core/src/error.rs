use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian: max |A - A^dagger| = {deviation:e} exceeds tolerance {tol:e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:e} below -{tol:e}")]
    NotPsd { min_eigenvalue: f64, tol: f64 },

    #[error("trace {trace} differs from 1 by more than {tol:e}")]
    TraceNotUnit { trace: f64, tol: f64 },

    #[error("POVM closure violated: max |sum - I| = {deviation:e} exceeds tolerance {tol:e}")]
    ClosureViolated { deviation: f64, tol: f64 },

    #[error("outcome has zero probability ({probability:e}); conditional state undefined")]
    ZeroProbability { probability: f64 },

    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },

    #[error("invalid permutation {perm:?} for {count} subsystems")]
    InvalidPermutation { perm: Vec<usize>, count: usize },

    #[error("dimension {0} exceeds supported size")]
    TooLarge(usize),

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
