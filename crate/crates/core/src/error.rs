use thiserror::Error;

#[derive(Debug, Error)]
pub enum MmsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("test function leaks into the boundary collar at point {point}")]
    SupportLeak { point: usize },
    #[error("difference quotients are not monotone (jump {jump:e} at step {step})")]
    NonMonotone { step: usize, jump: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MmsError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MmsError::InvalidInput(msg.into()))
}
