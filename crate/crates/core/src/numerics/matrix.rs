//! Dense complex and real-symmetric matrices plus a small LU solver.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::NumericsError;

/// A dq-frame complex quantity in per-unit (`re` is the d-axis, `im` the q-axis).
pub type ComplexPhasor = Complex64;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: vec![Complex64::new(0.0, 0.0); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self, NumericsError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(NumericsError::Dimension(format!(
                    "ragged rows: expected {n_cols} columns, found {}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        let m = Self { n_rows, n_cols, entries };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.entries[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn check_finite(&self) -> Result<(), NumericsError> {
        if self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(NumericsError::NonFinite("complex matrix entry".into()))
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// Left-multiplies by `diag(d)`, i.e. scales row `i` by `d[i]`.
    pub fn scale_rows(&self, d: &[Complex64]) -> Result<Self, NumericsError> {
        if d.len() != self.n_rows {
            return Err(NumericsError::Dimension(format!(
                "row scaling of length {} for {} rows",
                d.len(),
                self.n_rows
            )));
        }
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out[(i, j)] *= d[i];
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, NumericsError> {
        if x.len() != self.n_cols {
            return Err(NumericsError::Dimension(format!(
                "matrix has {} columns, vector has {} entries",
                self.n_cols,
                x.len()
            )));
        }
        Ok((0..self.n_rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<Self, NumericsError> {
        if self.n_cols != other.n_rows {
            return Err(NumericsError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = Self::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.n_cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<Self, NumericsError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(NumericsError::Dimension("matrix difference shape mismatch".into()));
        }
        Ok(Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// Extracts rows `rows` and columns `cols` (in the given order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.n_cols + j]
    }
}

/// Dense real symmetric matrix, stored full and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl RealSymMatrix {
    /// Validates symmetry to `1e-12 * max|A|` and finiteness, then symmetrizes exactly.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self, NumericsError> {
        if entries.len() != n * n {
            return Err(NumericsError::Dimension(format!(
                "{} entries for a {n}x{n} matrix",
                entries.len()
            )));
        }
        if entries.iter().any(|a| !a.is_finite()) {
            return Err(NumericsError::NonFinite("symmetric matrix entry".into()));
        }
        let scale = entries.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let tol = 1e-12 * scale;
        let mut entries = entries;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if (a - b).abs() > tol {
                    return Err(NumericsError::NotSymmetric { row: i, col: j, gap: (a - b).abs() });
                }
                let m = 0.5 * (a + b);
                entries[i * n + j] = m;
                entries[j * n + i] = m;
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(NumericsError::Dimension("symmetric matrix must be square".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `rᵀ A r`.
    pub fn quadratic_form(&self, r: &[f64]) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| r[i] * (0..n).map(|j| self.entries[i * n + j] * r[j]).sum::<f64>())
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Real part of the Hermitian part of `m`: `Re{(M + Mᴴ)/2}`.
///
/// The result is symmetric by construction, since entry `(i, j)` is
/// `(Re m_ij + Re m_ji) / 2`.
pub fn hermitian_real_part(m: &ComplexMatrix) -> Result<RealSymMatrix, NumericsError> {
    if !m.is_square() {
        return Err(NumericsError::Dimension(format!(
            "Hermitian part of a non-square {}x{} matrix",
            m.n_rows(),
            m.n_cols()
        )));
    }
    let n = m.n_rows();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (m[(i, j)].re + m[(j, i)].re);
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    if entries.iter().any(|a| !a.is_finite()) {
        return Err(NumericsError::NonFinite("Hermitian part".into()));
    }
    Ok(RealSymMatrix { n, entries })
}

/// Arithmetic needed by the generic LU routine.
pub(crate) trait Field:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn magnitude(self) -> f64;
}

impl Field for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Field for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// LU factorization with partial pivoting of a dense square matrix.
#[derive(Debug, Clone)]
pub(crate) struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Field> Lu<T> {
    /// Factorizes the row-major `n x n` matrix `a`. Fails when a pivot falls
    /// below `1e-14 * max|a|`; the error carries the offending column.
    pub(crate) fn factor(n: usize, a: &[T]) -> Result<Self, NumericsError> {
        debug_assert_eq!(a.len(), n * n);
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0f64, |m, x| m.max(x.magnitude()));
        let tiny = if scale > 0.0 { 1e-14 * scale } else { f64::MIN_POSITIVE };
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|i| (i, lu[i * n + k].magnitude()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmag > tiny) {
                return Err(NumericsError::Singular { index: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] = lu[i * n + j] - f * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub(crate) fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// Solves `A X = B` for complex `A` (square) and `B` with any column count.
pub fn solve_complex(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if !a.is_square() || a.n_rows() != b.n_rows() {
        return Err(NumericsError::Dimension("complex solve shape mismatch".into()));
    }
    let n = a.n_rows();
    let lu = Lu::factor(n, a.entries())?;
    let mut out = ComplexMatrix::zeros(n, b.n_cols());
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..b.n_cols() {
        for i in 0..n {
            col[i] = b[(i, j)];
        }
        let x = lu.solve(&col);
        for i in 0..n {
            out[(i, j)] = x[i];
        }
    }
    Ok(out)
}

/// Solves `A x = b` for real row-major `A`.
pub fn solve_real(n: usize, a: &[f64], b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if a.len() != n * n || b.len() != n {
        return Err(NumericsError::Dimension("real solve shape mismatch".into()));
    }
    Ok(Lu::factor(n, a)?.solve(b))
}
