use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("solver failed to converge ({what}); residual {residual:.3e}")]
    SolverFailure { what: String, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn solver(what: impl Into<String>, residual: f64) -> Self {
        Error::SolverFailure { what: what.into(), residual }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
