use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    /// An input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two objects that must share a grid or component layout do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The Krylov solver hit its iteration cap before reaching tolerance.
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverStagnation { iterations: usize, residual: f64 },

    /// A time step produced NaN or infinite values.
    #[error("non-finite values in solution at step {step}")]
    NonFinite { step: usize },

    /// Monte Carlo drift lookup returned a non-finite sample.
    #[error("non-finite drift sample on path {path} at step {step}")]
    NonFiniteDrift { path: usize, step: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Validation(msg.into()))
}
