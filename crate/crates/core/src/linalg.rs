//! Small dense helpers shared by the filter, estimators and oracles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Replaces `m` by `(m + mᵀ) / 2`. The result is exactly symmetric.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(what))?;
    let mut inv = chol.inverse();
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(what));
    }
    symmetrize(&mut inv);
    Ok(inv)
}

/// Solves `m x = rhs` for SPD `m`.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(what))?;
    Ok(chol.solve(rhs))
}

/// `ln det(m)` for SPD `m`.
pub fn spd_log_det(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(what))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetric square root `L` with `L Lᵀ = m` for a positive semidefinite `m`.
///
/// Uses an eigendecomposition so that rank-deficient covariances (zero
/// driving noise, for instance) are handled.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_spd_is_symmetric_and_exact() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let inv = spd_inverse(&m, "m").unwrap();
        assert_eq!(inv, inv.transpose());
        assert!(max_abs_diff(&(&m * &inv), &DMatrix::identity(3, 3)) < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            spd_inverse(&m, "m"),
            Err(Error::NotPositiveDefinite("m"))
        ));
    }

    #[test]
    fn sqrt_of_rank_deficient() {
        let b = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 0.0]);
        let m = &b * b.transpose();
        let l = psd_sqrt(&m);
        assert!(max_abs_diff(&(&l * l.transpose()), &m) < 1e-12);
        assert_eq!(psd_sqrt(&DMatrix::zeros(2, 2)), DMatrix::zeros(2, 2));
    }

    #[test]
    fn log_det_matches_product_of_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 8.0]);
        assert!((spd_log_det(&m, "m").unwrap() - 16f64.ln()).abs() < 1e-14);
    }
}
