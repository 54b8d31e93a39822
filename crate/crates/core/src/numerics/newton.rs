//! Damped Newton root-finder for smooth real systems.

use super::matrix::solve_real;

const MAX_HALVINGS: usize = 30;

/// Settings for [`newton_solve`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold on `‖F(x)‖∞`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonFailureKind {
    /// Iteration budget exhausted.
    MaxIterations,
    /// No step length along the search direction reduced the residual.
    LineSearch,
    /// Jacobian singular and the gradient fallback is zero.
    Singular,
    /// Residual evaluated to NaN or infinity.
    NonFinite,
    /// Residual and unknown dimensions disagree.
    Dimension,
}

/// Non-convergence report carrying the last iterate.
#[derive(Debug, Clone, thiserror::Error)]
#[error("Newton solve failed ({kind:?}) after {iterations} iterations, residual {residual_norm:.3e}")]
pub struct NewtonError {
    pub kind: NewtonFailureKind,
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| if a.is_nan() { f64::NAN } else { m.max(a.abs()) })
}

fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Forward-difference Jacobian with step `1e-7 * (1 + |x_i|)`, row-major.
pub fn finite_difference_jacobian<F>(residual: &mut F, x: &[f64], fx: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let m = fx.len();
    let mut jac = vec![0.0; m * n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-7 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let fp = residual(&xp);
        for i in 0..m {
            jac[i * n + j] = (fp[i] - fx[i]) / h;
        }
        xp[j] = x[j];
    }
    jac
}

/// Solves `F(x) = 0` from `x0`.
///
/// `jacobian` returns the row-major Jacobian at `x`; pass `None` to use
/// forward differences. Each Newton step is halved (up to 30 times) until
/// the Euclidean residual norm decreases. When the Jacobian is singular the
/// search direction falls back to `-Jᵀ F`.
pub fn newton_solve<F, J>(
    mut residual: F,
    mut jacobian: Option<J>,
    x0: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonSolution, NewtonError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = residual(&x);
    let fail = |kind, x: Vec<f64>, iterations, residual_norm| NewtonError { kind, x, iterations, residual_norm };

    if fx.len() != n {
        return Err(fail(NewtonFailureKind::Dimension, x, 0, f64::NAN));
    }

    for iter in 0..=opts.max_iter {
        let norm = inf_norm(&fx);
        if !norm.is_finite() {
            return Err(fail(NewtonFailureKind::NonFinite, x, iter, norm));
        }
        if norm <= opts.tol {
            return Ok(NewtonSolution { x, iterations: iter, residual_norm: norm });
        }
        if iter == opts.max_iter {
            return Err(fail(NewtonFailureKind::MaxIterations, x, iter, norm));
        }

        let jac = match jacobian.as_mut() {
            Some(j) => j(&x),
            None => finite_difference_jacobian(&mut residual, &x, &fx),
        };
        let neg_f: Vec<f64> = fx.iter().map(|v| -v).collect();
        let direction = match solve_real(n, &jac, &neg_f) {
            Ok(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                // gradient of ½‖F‖² is Jᵀ F
                let g: Vec<f64> = (0..n).map(|j| (0..n).map(|i| jac[i * n + j] * neg_f[i]).sum()).collect();
                if two_norm(&g) == 0.0 {
                    return Err(fail(NewtonFailureKind::Singular, x, iter, norm));
                }
                g
            }
        };

        let merit = two_norm(&fx);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(a, d)| a + step * d).collect();
            let ft = residual(&trial);
            let m = two_norm(&ft);
            if m.is_finite() && m < merit {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((xn, fxn)) => {
                x = xn;
                fx = fxn;
            }
            None => return Err(fail(NewtonFailureKind::LineSearch, x, iter, norm)),
        }
    }
    unreachable!("loop returns on the final iteration")
}
