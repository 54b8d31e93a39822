//! Cyclic Jacobi eigensolver for dense real symmetric matrices.

use super::{NumericsError, RealSymMatrix};

const MAX_SWEEPS: usize = 100;

/// All eigenvalues of `a`, ascending.
///
/// Sweeps rotate every off-diagonal pair in row order until the off-diagonal
/// Frobenius norm drops below `1e-12 * ‖A‖_F`.
pub fn symmetric_eigenvalues(a: &RealSymMatrix) -> Result<Vec<f64>, NumericsError> {
    let n = a.dim();
    let mut m = a.entries().to_vec();
    let norm = a.frobenius_norm();
    let threshold = 1e-12 * norm;

    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > threshold {
        if sweeps == MAX_SWEEPS {
            return Err(NumericsError::NoConvergence {
                iterations: sweeps,
                residual: off(&m),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest eigenvalue of `a`. Fails on an empty matrix.
pub fn min_eigenvalue(a: &RealSymMatrix) -> Result<f64, NumericsError> {
    symmetric_eigenvalues(a)?
        .first()
        .copied()
        .ok_or_else(|| NumericsError::Dimension("eigenvalue of an empty matrix".into()))
}
