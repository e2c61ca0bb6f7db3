use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite derivative at t = {t} (component {index})")]
    NonFinite { t: f64, index: usize },

    #[error("step size underflow at t = {t}: h = {h:e} below h_min")]
    StepUnderflow { t: f64, h: f64 },

    #[error("gradient flow diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("time grid is not uniform (sample {index})")]
    NonUniformGrid { index: usize },

    #[error("point is not an equilibrium: |grad V| = {grad_norm:e}")]
    NotEquilibrium { grad_norm: f64 },
}
