//! Small dense linear-algebra helpers: Kronecker products, the column-stacking
//! `vec` operator, spectral radius and condition estimates.
//!
//! All matrices are `nalgebra::DMatrix<f64>`. Storage in nalgebra is
//! column-major, so `vec` is a straight copy of the backing slice.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{RcarError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Iteration cap handed to the real Schur decomposition.
const SCHUR_MAX_ITER: usize = 10_000;

/// Kronecker product `m1 ⊗ m2`, of shape `(r1·r2) × (c1·c2)`.
pub fn kron(m1: &Matrix, m2: &Matrix) -> Matrix {
    m1.kronecker(m2)
}

/// Column-stacking vectorization.
pub fn vec(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for a `p × p` matrix.
pub fn unvec(w: &Vector, p: usize) -> Result<Matrix> {
    if w.len() != p * p {
        return Err(RcarError::DimensionMismatch(format!(
            "unvec: vector of length {} cannot form a {p}×{p} matrix",
            w.len()
        )));
    }
    Ok(Matrix::from_column_slice(p, p, w.as_slice()))
}

/// Largest absolute entry; 0 for an empty matrix.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Row-major nested vectors, for serialization.
pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(RcarError::DimensionMismatch(format!(
            "{what}: expected a square matrix, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(RcarError::NonFinite(format!("{what}: matrix has non-finite entries")));
    }
    Ok(())
}

/// All eigenvalues of a real square matrix, via the real Schur form.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    check_square(m, "eigenvalues")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| RcarError::Solver("real Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// `max |λ|` over the eigenvalues of `m`.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    let sym = symmetrize(m);
    nalgebra::linalg::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Square-root factor `L` with `L Lᵀ = m` for a symmetric PSD matrix.
/// Slightly negative eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Matrix {
    let eig = nalgebra::linalg::SymmetricEigen::new(symmetrize(m));
    let root = Matrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * root
}

fn norm_one(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse together with the reciprocal 1-norm condition number.
///
/// Returns `None` when LU factorization reports an exactly singular matrix.
pub fn inverse_with_rcond(m: &Matrix) -> Option<(Matrix, f64)> {
    let inv = m.clone().lu().try_inverse()?;
    if inv.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let denom = norm_one(m) * norm_one(&inv);
    let rcond = if denom > 0.0 { 1.0 / denom } else { 0.0 };
    Some((inv, rcond))
}

/// Inverse of `m`, failing when the reciprocal condition estimate drops below `min_rcond`.
pub fn checked_inverse(m: &Matrix, min_rcond: f64, what: &str) -> Result<Matrix> {
    check_square(m, what)?;
    match inverse_with_rcond(m) {
        Some((inv, rcond)) if rcond >= min_rcond => Ok(inv),
        Some((_, rcond)) => Err(RcarError::Singular(format!(
            "{what}: reciprocal condition {rcond:e} below {min_rcond:e}"
        ))),
        None => Err(RcarError::Singular(format!("{what}: matrix is exactly singular"))),
    }
}

/// Matrix power by repeated squaring; `m^0 = I`.
pub fn matrix_power(m: &Matrix, mut k: usize) -> Matrix {
    let n = m.nrows();
    let mut result = Matrix::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}
