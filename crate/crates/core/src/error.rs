use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid impulse set: {0}")]
    InvalidImpulseSet(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A tridiagonal pivot fell below the breakdown threshold.
    #[error("tridiagonal pivot {pivot:e} at row {row} is below {threshold:e}")]
    SingularPivot { row: usize, pivot: f64, threshold: f64 },

    #[error("singular matrix")]
    SingularMatrix,

    #[error("policy iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularPivot { .. } | Error::SingularMatrix | Error::NotConverged { .. }
        )
    }
}
