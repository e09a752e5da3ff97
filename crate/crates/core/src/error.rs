use thiserror::Error;

/// Errors raised by the solvers, the model layer and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{method} did not converge after {iterations} iterations (best residual {residual:e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("i/o: {0}")]
    Io(String),

    #[error("exact enumeration is capped at N = {max} spins, got N = {n}")]
    TooLarge { n: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
