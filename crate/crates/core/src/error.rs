use thiserror::Error;

/// Errors surfaced by the library. Each maps to a CLI exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    /// |z| is outside the assumed zero-free disc, so no error bound applies.
    #[error("|z| = {z} is not below the zero-free radius {delta}; pass --force to compute anyway")]
    Regime { z: f64, delta: f64 },

    #[error("cap exceeded: {what} needs {needed}, cap is {cap}")]
    CapExceeded { what: String, needed: u128, cap: u128 },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Regime { .. } => 3,
            Error::CapExceeded { .. } => 4,
            Error::Internal(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
