//! Variational learning dynamics in continuous time.
//!
//! The crate evaluates weighted action functionals and their Euler-Lagrange
//! equations: the damped second-order laws obtained from first-order
//! Lagrangians, the fourth-order laws produced by acceleration-dependent
//! kinetic energies under exponential weights `e^{θt}` and `e^{-t/ε}`, the
//! second-order laws they collapse to, and plain gradient flow.
//!
//! Modules:
//! - [`potentials`]: objective functions `V(q, t)` with exact gradients and Hessians.
//! - [`lagrangian`]: weight functions and Lagrangian parameter bundles.
//! - [`dynamics`]: right-hand sides, boundary-condition residuals and trajectory residuals.
//! - [`integrate`]: fixed-step RK4 and adaptive Dormand-Prince integration.
//! - [`discrete`]: discretized action, its gradient, discrete EL residual and path-space descent.
//! - [`stability`]: characteristic polynomials, roots and Routh-Hurwitz classification.

// `!(x > 0.0)` is used on purpose so that NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrete;
pub mod dynamics;
mod error;
pub mod integrate;
pub mod lagrangian;
pub mod potentials;
pub mod stability;

pub use error::{Error, Result};

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
