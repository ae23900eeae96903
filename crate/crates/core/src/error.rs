use thiserror::Error;

/// Errors produced by grid operations, noise synthesis and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),

    #[error("expected {expected}-channel field, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("inner linear solver missed its residual target ({achieved:.3e} > {target:.3e} after {iterations} iterations)")]
    LinSolveFailure {
        achieved: f64,
        target: f64,
        iterations: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
