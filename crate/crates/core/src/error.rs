use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("polynomial degree {degree} exceeds cap {cap}")]
    DegreeCap { degree: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("population cap {cap} exceeded at t = {time} (population {population})")]
    PopulationCap { cap: usize, time: f64, population: usize },
    #[error("regime mismatch: {0}")]
    Regime(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("replay mismatch: {0}")]
    Replay(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
