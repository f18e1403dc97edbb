use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("fields live on different grids ({left} vs {right} points per side)")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{solver} did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error(
        "observation operator `{0}` is not idempotent; the explicit analysis update \
         is invalid, use the implicit analysis step instead"
    )]
    NotIdempotent(String),

    #[error("operator failed self-adjointness spot check (relative asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("{0} is undefined for a zero field")]
    ZeroField(&'static str),

    #[error("logarithm undefined: zero error norm at t = {0}")]
    ZeroNorm(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("incompatible coarse space: {0}")]
    Incompatible(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
