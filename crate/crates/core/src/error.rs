use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no observations exceed the threshold {omega}")]
    EmptyTail { omega: f64 },

    /// A linear predictor left the admissible band `|x'theta| <= LINK_CAP`.
    #[error("linear predictor {value} exceeds the link cap; iterate diverged")]
    Divergence { value: f64 },

    #[error("projection program infeasible (last gamma1 = {gamma1})")]
    Infeasible { gamma1: f64 },

    #[error("solver stopped after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Parse { .. } | Error::Io(_) | Error::EmptyTail { .. } | Error::DimensionMismatch { .. } => 3,
            Error::Divergence { .. } | Error::Infeasible { .. } | Error::NotConverged { .. } => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse { line, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
