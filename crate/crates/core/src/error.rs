use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid ensemble dimensions or run parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a documented precondition (index out of range, shape mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An eigendecomposition failed or produced non-finite values.
    #[error("numerical failure: {message} (matrix hash {matrix_hash:016x})")]
    Numerical { message: String, matrix_hash: u64 },

    /// Two eigenvalues coincide where a simple spectrum is required.
    #[error("singular input: {0}")]
    Singular(String),

    /// Input lies outside the domain of a density or formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration requested beyond the memory guard.
    #[error("hypercube dimension {d} exceeds the oracle guard of {limit}")]
    Guard { d: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
