//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ElkError {
    #[error("grid size {0} is not a power of two >= 16")]
    BadGridSize(usize),

    #[error("box half-width must be positive, got {0}")]
    BadBoxHalf(f64),

    #[error("grids do not match: n={0} vs n={1}")]
    GridMismatch(usize, usize),

    #[error("parameter out of range: {0}")]
    BadParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("field i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad field file: {0}")]
    BadFieldFile(String),

    #[error("solver aborted: {0}")]
    SolverAbort(String),
}

pub type Result<T> = std::result::Result<T, ElkError>;
