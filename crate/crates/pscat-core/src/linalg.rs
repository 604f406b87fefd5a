//! Dense complex linear algebra helpers shared by the Krein and inverse
//! modules. Everything here wraps nalgebra on small matrices (n is the
//! number of scatterers, a few dozen at most).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Frobenius norm of M - M^H.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

/// Frobenius norm of M - M^T.
pub fn symmetry_defect(m: &CMatrix) -> f64 {
    (m - m.transpose()).norm()
}

/// Largest imaginary part over all entries.
pub fn max_imag(m: &CMatrix) -> f64 {
    m.iter().map(|e| e.im.abs()).fold(0.0, f64::max)
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues (ascending is
/// not guaranteed by nalgebra, so callers must not rely on order) and the
/// unitary eigenvector matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let se = nalgebra::SymmetricEigen::new(m.clone());
    (se.eigenvalues.iter().copied().collect(), se.eigenvectors)
}

/// Applies a real scalar function to a Hermitian matrix through its
/// eigendecomposition: Q f(Lambda) Q^H. The result is Hermitized to remove
/// rounding noise.
pub fn hermitian_matrix_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (evals, q) = hermitian_eigen(m);
    let n = m.nrows();
    let mut diag = CMatrix::zeros(n, n);
    for (k, lambda) in evals.iter().enumerate() {
        diag[(k, k)] = Complex64::new(f(*lambda), 0.0);
    }
    let out = &q * diag * q.adjoint();
    hermitize(&out)
}

/// Outcome of inverting a square complex matrix by LU with partial pivoting
/// plus one step of iterative refinement.
pub struct Inversion {
    pub inverse: CMatrix,
    pub determinant: Complex64,
    /// |det| divided by the Hadamard bound (product of row norms); a
    /// scale-free singularity measure in [0, 1].
    pub det_relative: f64,
    /// ||A||_F * ||A^-1||_F condition estimate.
    pub condition_estimate: f64,
}

/// Relative determinant threshold below which a matrix is treated as
/// numerically singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

pub fn invert_with_refinement(a: &CMatrix) -> Result<Inversion> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let lu = a.clone().lu();
    let determinant = lu.determinant();
    let hadamard: f64 = (0..n).map(|i| a.row(i).norm()).product();
    let det_relative = if hadamard > 0.0 {
        determinant.norm() / hadamard
    } else {
        0.0
    };
    if det_relative < SINGULARITY_THRESHOLD {
        return Err(Error::Domain(alloc::format!(
            "matrix numerically singular: |det| = {:.3e}, relative {:.3e}",
            determinant.norm(),
            det_relative
        )));
    }
    let identity = CMatrix::identity(n, n);
    let mut inverse = lu
        .try_inverse()
        .ok_or_else(|| Error::Domain("LU inversion failed".into()))?;
    // one refinement step: X <- X + X_lu_solve(I - A X)
    let residual = &identity - a * &inverse;
    let lu2 = a.clone().lu();
    if let Some(correction) = lu2.solve(&residual) {
        inverse += correction;
    }
    let condition_estimate = a.norm() * inverse.norm();
    Ok(Inversion { inverse, determinant, det_relative, condition_estimate })
}

/// Least-squares solution of the overdetermined system A x = b through
/// Householder QR. Errors with the deficient column indices when the
/// triangular factor signals rank deficiency.
pub fn least_squares(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Domain(alloc::format!(
            "least-squares system is underdetermined: {m} rows < {n} columns"
        )));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let rmax = (0..n).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    let deficient: Vec<usize> = (0..n)
        .filter(|&i| r[(i, i)].norm() < 1e-12 * rmax.max(f64::MIN_POSITIVE))
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient { columns: deficient });
    }
    let qtb = qr.q().adjoint() * b;
    let mut x = CVector::zeros(n);
    // back substitution on the upper-triangular factor
    for i in (0..n).rev() {
        let mut acc = qtb[i];
        for j in i + 1..n {
            acc -= r[(i, j)] * x[j];
        }
        x[i] = acc / r[(i, i)];
    }
    Ok(x)
}

/// True when the Hermitian part (M - M^H)/(2i) is positive definite,
/// decided through a Cholesky attempt.
pub fn imaginary_part_positive_definite(m: &CMatrix) -> bool {
    let im_part = (m - m.adjoint()) * Complex64::new(0.0, -0.5);
    nalgebra::Cholesky::new(im_part).is_some()
}
