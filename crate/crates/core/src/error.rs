//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported dimension n = {0}")]
    UnsupportedDimension(usize),
    #[error("singular input: {0}")]
    Singular(String),
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("series did not converge: tail estimate {tail:.3e} after {terms} terms")]
    SeriesNotConverged { terms: usize, tail: f64 },
    #[error("linear solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolverNotConverged { iterations: usize, residual: f64 },
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("no negative direction: phi = {0:.6e} is not negative")]
    NoNegativeDirection(f64),
    #[error("level bracket failed: {0}")]
    Bracket(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
