//! Dense symmetric-matrix helpers built on `nalgebra`.
//!
//! Square roots here are always the symmetric (spectral) root, never a
//! Cholesky factor, so results are unique and comparable across builds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues at or below this fraction of the largest eigenvalue count as zero.
pub const EIGEN_FLOOR: f64 = 1e-13;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn checked_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if min_ev <= 0.0 || min_ev <= EIGEN_FLOOR * max_ev {
        return Err(Error::NotPositiveDefinite(min_ev));
    }
    Ok(eig)
}

fn spectral_map(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let vecs = &eig.eigenvectors;
    let mapped = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| f(l)));
    let out = vecs * DMatrix::from_diagonal(&mapped) * vecs.transpose();
    (&out + out.transpose()) * 0.5
}

/// Symmetric positive-definite square root `R` with `R R = m`.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = checked_eigen(m)?;
    Ok(spectral_map(&eig, f64::sqrt))
}

/// Symmetric inverse square root `m^{-1/2}`.
pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = checked_eigen(m)?;
    Ok(spectral_map(&eig, |l| 1.0 / l.sqrt()))
}

/// Inverse of an SPD matrix through its Cholesky factor, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericallySingular("Cholesky factorization failed".into()))?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Block-diagonal matrix with the given square blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let d = b.nrows();
        out.view_mut((at, at), (d, d)).copy_from(b);
        at += d;
    }
    out
}

/// Largest absolute entry of `a - b`, divided by `max(1, max|b|)`.
pub fn rel_max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    diff / max_abs(b).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(p: usize, entries: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_iterator(p, p, entries.iter().copied().take(p * p));
        &a * a.transpose() + DMatrix::identity(p, p) * (p as f64) * 0.1
    }

    #[test]
    fn identity_root_is_identity() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert!(rel_max_diff(&spd_sqrt(&id).unwrap(), &id) < 1e-15);
    }

    #[test]
    fn diagonal_root() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = spd_sqrt(&m).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!(rel_max_diff(&r, &expected) < 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(spd_sqrt(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn rejects_singular_and_indefinite() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(spd_sqrt(&singular), Err(Error::NotPositiveDefinite(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_sqrt(&indefinite), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn kron_small() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DMatrix::<f64>::identity(2, 2);
        let k = kron(&a, &b);
        let expected = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        assert_eq!(k, expected);
    }

    proptest! {
        #[test]
        fn sqrt_reconstructs(p in 1usize..=10, entries in prop::collection::vec(-2.0f64..2.0, 100)) {
            let m = random_spd(p, &entries);
            let r = spd_sqrt(&m).unwrap();
            prop_assert!(rel_max_diff(&r, &r.transpose()) == 0.0);
            prop_assert!(rel_max_diff(&(&r * &r), &m) < 1e-10);
        }

        #[test]
        fn inv_sqrt_whitens(p in 1usize..=8, entries in prop::collection::vec(-2.0f64..2.0, 64)) {
            let m = random_spd(p, &entries);
            let w = spd_inv_sqrt(&m).unwrap();
            prop_assert!(rel_max_diff(&(&w * &m * &w), &DMatrix::identity(p, p)) < 1e-10);
        }
    }
}
