//! Subspace distances and norms.

use super::{svd, DenseMatrix, OrthonormalBasis};
use crate::error::{Error, Result};

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    Ok(svd(a)?.singular_values[0])
}

/// `(I − UUᵀ)V`, computed without forming a d×d projector.
fn residual(u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let coeffs = u.t_matmul(v)?;
    v.sub(&u.matmul(&coeffs)?)
}

/// Projection distance ‖UUᵀ − VVᵀ‖_2 between two k-dimensional subspaces.
///
/// Evaluated as ‖(I − UUᵀ)V‖_2, which is equal for bases of equal rank and
/// keeps full absolute accuracy for nearly identical subspaces.
pub fn projection_distance(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<f64> {
    if u.rows() != v.rows() || u.cols() != v.cols() {
        return Err(Error::dims(
            "projection_distance",
            format!("{}x{}", u.rows(), u.cols()),
            format!("{}x{}", v.rows(), v.cols()),
        ));
    }
    let a = spectral_norm(&residual(u.as_matrix(), v.as_matrix())?)?;
    let b = spectral_norm(&residual(v.as_matrix(), u.as_matrix())?)?;
    Ok(a.max(b).min(1.0))
}

/// ‖UUᵀ − VVᵀ‖_2 by explicit projector assembly. O(d³); meant for checking.
pub fn projection_distance_projector(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<f64> {
    if u.rows() != v.rows() || u.cols() != v.cols() {
        return Err(Error::dims(
            "projection_distance_projector",
            format!("{}x{}", u.rows(), u.cols()),
            format!("{}x{}", v.rows(), v.cols()),
        ));
    }
    let pu = u.as_matrix().matmul_t(u.as_matrix())?;
    let pv = v.as_matrix().matmul_t(v.as_matrix())?;
    spectral_norm(&pu.sub(&pv)?)
}

/// sin θ_k(Z, V_k) = ‖(I − ZZᵀ)V_k‖_2 for a d×r basis Z and d×k basis V_k, r ≥ k.
pub fn sin_theta_k(z: &OrthonormalBasis, v_k: &OrthonormalBasis) -> Result<f64> {
    if z.rows() != v_k.rows() || z.cols() < v_k.cols() {
        return Err(Error::dims(
            "sin_theta_k",
            format!("{} rows and at least {} columns", v_k.rows(), v_k.cols()),
            format!("{}x{}", z.rows(), z.cols()),
        ));
    }
    Ok(spectral_norm(&residual(z.as_matrix(), v_k.as_matrix())?)?.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(rows: &[&[f64]]) -> OrthonormalBasis {
        OrthonormalBasis::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn identical_and_orthogonal() {
        let e1 = basis(&[&[1.0], &[0.0]]);
        let e2 = basis(&[&[0.0], &[1.0]]);
        assert_eq!(projection_distance(&e1, &e1).unwrap(), 0.0);
        assert_eq!(projection_distance(&e1, &e2).unwrap(), 1.0);
        assert_eq!(sin_theta_k(&e1, &e2).unwrap(), 1.0);
        assert_eq!(sin_theta_k(&e1, &e1).unwrap(), 0.0);
    }

    #[test]
    fn rotated_line() {
        let th: f64 = 0.3;
        let e1 = basis(&[&[1.0], &[0.0]]);
        let v = basis(&[&[th.cos()], &[th.sin()]]);
        // Direct 2x2 evaluation: e1e1ᵀ − vvᵀ has eigenvalues ±sin θ.
        let expected = 0.295_520_206_661_339_6;
        assert!((projection_distance(&e1, &v).unwrap() - expected).abs() < 1e-15);
        assert!((projection_distance_projector(&e1, &v).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn containing_subspace_has_zero_sin() {
        let z = OrthonormalBasis::new(DenseMatrix::eye(4, 3)).unwrap();
        let v = basis(&[&[0.6], &[0.8], &[0.0], &[0.0]]);
        assert!(sin_theta_k(&z, &v).unwrap() < 1e-16);
        assert!(sin_theta_k(&v, &z).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&DenseMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(spectral_norm(&DenseMatrix::diag(&[5.0, 1.0])).unwrap(), 5.0);
    }

    #[test]
    fn mismatched_dims() {
        let a = OrthonormalBasis::new(DenseMatrix::eye(3, 1)).unwrap();
        let b = OrthonormalBasis::new(DenseMatrix::eye(3, 2)).unwrap();
        assert!(projection_distance(&a, &b).is_err());
    }
}
