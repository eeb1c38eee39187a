use std::io;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum MeamError {
    /// Invalid hyperparameter, dimension, or network configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor or batch shapes that do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// API misuse (empty batch, mismatched grids, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite state while integrating an ODE/SDE or adjoint.
    #[error("integration error at step {step}: {msg}")]
    Integration { step: usize, msg: String },

    /// Non-finite loss or gradient during optimization.
    #[error("training error at step {step}: {msg}")]
    Training { step: u64, msg: String },

    /// Fixed-point iteration did not converge.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, MeamError>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, got: impl ToString) -> MeamError {
    MeamError::Shape {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
