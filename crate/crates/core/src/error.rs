use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} is out of range for a {dim}-dimensional grid")]
    InvalidAxis { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Poisson right-hand side is not neutral: mean {mean:e} exceeds {limit:e}")]
    IncompatibleRhs { mean: f64, limit: f64 },

    #[error("linear solve did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("positivity violated for species `{species}` at cell {index} (value {value:e})")]
    PositivityViolation {
        species: String,
        index: usize,
        value: f64,
    },

    #[error("dense oracle supports at most {limit} cells, got {size}")]
    OracleSize { size: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
