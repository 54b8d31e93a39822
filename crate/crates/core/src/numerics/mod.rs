//! Numerical kernels: dense complex/real-symmetric matrices, a Jacobi
//! eigensolver, a damped Newton solver and explicit Runge-Kutta integrators.
//!
//! Complex states are flattened to real vectors as
//! `[re(v_1), im(v_1), ..., re(v_N), im(v_N)]` so the integrators and the
//! Newton solver stay field-agnostic.

mod eigen;
mod matrix;
mod newton;
mod ode;

use num_complex::Complex64;

pub use eigen::{min_eigenvalue, symmetric_eigenvalues};
pub use matrix::{hermitian_real_part, solve_complex, solve_real, ComplexMatrix, ComplexPhasor, RealSymMatrix};
pub use newton::{finite_difference_jacobian, newton_solve, NewtonError, NewtonFailureKind, NewtonOptions, NewtonSolution};
pub use ode::{integrate, Integrator, OdeSolution, StepControl};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("matrix not symmetric at ({row}, {col}), gap {gap:.3e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("singular matrix (pivot {index})")]
    Singular { index: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("integration aborted at t = {time} s: {reason}")]
    IntegrationAborted { time: f64, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Interleaves complex entries into `[re, im, re, im, ...]`.
pub fn flatten(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Inverse of [`flatten`].
pub fn unflatten(x: &[f64]) -> Vec<Complex64> {
    x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// `max_k |a_k - b_k|` over complex vectors of equal length.
pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
