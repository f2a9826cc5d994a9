//! Alignment of one worker's basis onto a baseline basis.

use super::qr::householder_qr;
use super::{dot, svd, DenseMatrix};
use crate::error::{Error, Result};

/// Orthogonal Procrustes transformation: the orthogonal `D` minimizing
/// ‖z_i D − z_base‖_F, given by `W₁W₂ᵀ` where `z_iᵀ z_base = W₁ΣW₂ᵀ`.
///
/// Zero singular directions of the cross-Gram take the completion chosen by
/// the SVD routine; any completion attains the same objective.
pub fn procrustes(z_i: &DenseMatrix, z_base: &DenseMatrix) -> Result<DenseMatrix> {
    check_pair("procrustes", z_i, z_base)?;
    let cross = z_i.t_matmul(z_base)?;
    let f = svd(&cross)?;
    let d = f.u.as_matrix().matmul_t(f.v.as_matrix())?;
    let drift = d
        .t_matmul(&d)?
        .max_abs_diff(&DenseMatrix::identity(d.cols()));
    if drift > 1e-13 {
        // Re-orthogonalize; R ≈ I so Q stays the nearest orthogonal factor.
        let (q, _) = householder_qr(&d);
        return Ok(q);
    }
    Ok(d)
}

/// Sign-fixing alignment: `D = diag(sgn⟨z_i[:,j], z_base[:,j]⟩)`, the
/// minimizer of ‖z_i D − z_base‖_F over ±1 diagonal matrices. A zero inner
/// product maps to +1.
pub fn sign_fix(z_i: &DenseMatrix, z_base: &DenseMatrix) -> Result<DenseMatrix> {
    check_pair("sign_fix", z_i, z_base)?;
    let signs: Vec<f64> = (0..z_i.cols())
        .map(|j| {
            if dot(z_i.col(j), z_base.col(j)) < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    Ok(DenseMatrix::diag(&signs))
}

fn check_pair(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(
            op,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}
