use thiserror::Error;

/// Failures raised anywhere in the meshing, assembly, solve and statistics
/// pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("insufficient burn-in: transient amplitude {transient:e} exceeds noise floor {floor:e}")]
    InsufficientBurnIn { transient: f64, floor: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
