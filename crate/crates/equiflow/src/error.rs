use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("mismatched array length: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("parameter out of range: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("linear system singular at row {row}")]
    SingularSystem { row: usize },

    #[error("eigensolver failed after {iterations} iterations: {what}")]
    EigenSolve { what: String, iterations: usize },

    #[error("time step rejected: {0}")]
    StepRejected(String),

    #[error(
        "inner iteration did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    InnerIteration { iterations: usize, residual: f64 },

    #[error("heat flow did not reach the terminal tolerance: {0}")]
    TerminalTolerance(String),
}
