use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The dual norm has a kink at the given covector, so the duality map is set-valued there.
    #[error("dual norm is not differentiable at {0:?}")]
    NonDifferentiable(Vec<f64>),

    #[error("no dictionary direction reaches the near-supremum within eps = {eps}")]
    NoNearSupremum { eps: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error estimate {error} at level {level}")]
    QuadratureNonConvergence { estimate: f64, error: f64, level: u32 },

    #[error("transport solver did not converge within {0} pivots")]
    SolverNonConvergence(usize),

    #[error("duality gap {gap:e} above tolerance {tol:e}")]
    DualityGap { gap: f64, tol: f64 },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
