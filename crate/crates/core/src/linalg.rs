//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices. The helpers exist
//! so that symmetrization, positive-definite inversion and the eigenvalue
//! floor repair are implemented exactly once and every caller inherits the
//! same numerical conventions.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue floor used when repairing an indefinite symmetric
/// matrix before inversion: eigenvalues below `EIGEN_FLOOR_REL * lambda_max`
/// are raised to that floor.
pub const EIGEN_FLOOR_REL: f64 = 1e-8;

/// Forces exact symmetry by averaging opposing off-diagonal entries.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    symmetrize_in_place(&mut out);
    out
}

/// In-place variant of [`symmetrize`].
pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    assert_eq!(m.nrows(), m.ncols(), "symmetrize requires a square matrix");
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Maximum absolute asymmetry `|m_ij - m_ji|` over all pairs.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Whether all entries are finite.
pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Attempts a Cholesky-based inverse; returns `None` when the matrix is not
/// numerically positive definite. The result is re-symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let mut inv = chol.inverse();
    symmetrize_in_place(&mut inv);
    Some(inv)
}

/// Whether the matrix admits a Cholesky factorization, i.e. is numerically
/// positive definite.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

/// Inverts a symmetric matrix, repairing it first when it is not positive
/// definite: eigenvalues below `EIGEN_FLOOR_REL * lambda_max` are floored at
/// that value before inverting on the eigenbasis.
///
/// Returns the inverse together with a flag that is `true` when the repair
/// path was taken. The input must be exactly symmetric.
pub fn floored_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(inv) = spd_inverse(m) {
        return (inv, false);
    }
    let eig = m.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    // A wholly non-positive spectrum still gets a tiny positive floor so the
    // inverse exists; the `repaired` flag tells the caller the estimate was
    // not usable as-is.
    let floor = if lambda_max > 0.0 {
        EIGEN_FLOOR_REL * lambda_max
    } else {
        EIGEN_FLOOR_REL
    };
    let inv_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| 1.0 / l.max(floor)),
    );
    let mut inv =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    symmetrize_in_place(&mut inv);
    (inv, true)
}

/// Covariance matrix of a first-order autoregressive process:
/// `sigma_ij = base^|i - j|`.
pub fn toeplitz_ar(p: usize, base: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| base.powi((i as i32 - j as i32).abs()))
}
