//! Dense linear-algebra kernel: orthonormalization, SVD, Gram matrices,
//! subspace distances and basis alignment.

mod align;
mod matrix;
mod qr;
mod subspace;
mod svd;

pub use align::{procrustes, sign_fix};
pub use matrix::DenseMatrix;
pub use qr::householder_qr;
pub use subspace::{projection_distance, projection_distance_projector, sin_theta_k, spectral_norm};
pub use svd::{svd, MAX_SWEEPS};

pub(crate) use matrix::dot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance on ‖QᵀQ − I‖_max.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Relative pivot threshold used by [`orth`] to flag rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

/// A d×r matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthonormalBasis {
    matrix: DenseMatrix,
    tolerance: f64,
}

impl OrthonormalBasis {
    /// Validates orthonormality at the default tolerance.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, ORTHONORMAL_TOL)
    }

    pub fn with_tolerance(matrix: DenseMatrix, tolerance: f64) -> Result<Self> {
        if matrix.cols() > matrix.rows() {
            return Err(Error::dims(
                "OrthonormalBasis",
                format!("cols <= rows ({})", matrix.rows()),
                matrix.cols(),
            ));
        }
        matrix.ensure_finite()?;
        let basis = Self { matrix, tolerance };
        let err = basis.orthogonality_error();
        if err > tolerance {
            return Err(Error::DegenerateData(format!(
                "columns are not orthonormal: ‖QᵀQ − I‖_max = {err:e} > {tolerance:e}"
            )));
        }
        Ok(basis)
    }

    /// Wraps a matrix produced by an orthonormalizing routine in this crate.
    pub(crate) fn from_trusted(matrix: DenseMatrix) -> Self {
        Self {
            matrix,
            tolerance: ORTHONORMAL_TOL,
        }
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// The leading `k` columns, still orthonormal.
    pub fn leading(&self, k: usize) -> Self {
        Self {
            matrix: self.matrix.leading_cols(k),
            tolerance: self.tolerance,
        }
    }

    /// ‖QᵀQ − I‖_max.
    pub fn orthogonality_error(&self) -> f64 {
        let g = self
            .matrix
            .t_matmul(&self.matrix)
            .expect("QᵀQ is always conformable");
        g.max_abs_diff(&DenseMatrix::identity(self.cols()))
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        self.orthogonality_error() <= tol
    }
}

/// Output of [`svd`]: `A = U diag(σ) Vᵀ` with σ non-increasing.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: OrthonormalBasis,
    pub singular_values: Vec<f64>,
    pub v: OrthonormalBasis,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Keeps the top `k` triplets.
    pub fn truncate(self, k: usize) -> Self {
        let k = k.min(self.rank());
        Self {
            u: self.u.leading(k),
            singular_values: self.singular_values[..k].to_vec(),
            v: self.v.leading(k),
        }
    }
}

/// Orthonormalizes the columns of `y` by Householder QR.
///
/// The R diagonal is forced nonnegative, so the result is unique for
/// full-rank input. Fails with [`Error::RankDeficient`] when a pivot falls
/// below `RANK_TOL · ‖y‖_2`.
pub fn orth(y: &DenseMatrix) -> Result<OrthonormalBasis> {
    check_tall("orth", y)?;
    y.ensure_finite()?;
    let (q, r) = householder_qr(y);
    let norm = spectral_norm(&r)?;
    let threshold = RANK_TOL * norm;
    for j in 0..r.cols() {
        let magnitude = r[(j, j)];
        if magnitude < threshold || magnitude == 0.0 {
            return Err(Error::RankDeficient {
                pivot: j,
                magnitude,
                threshold,
            });
        }
    }
    Ok(OrthonormalBasis::from_trusted(q))
}

/// Same factorization as [`orth`] without the rank check.
///
/// Directions that `y` does not span are filled by the Householder
/// completion, so the result is orthonormal for any input. Used for local
/// iterations on shards whose Gram matrix has rank below the iteration rank.
pub fn orth_completed(y: &DenseMatrix) -> Result<OrthonormalBasis> {
    check_tall("orth_completed", y)?;
    y.ensure_finite()?;
    let (q, _) = householder_qr(y);
    Ok(OrthonormalBasis::from_trusted(q))
}

fn check_tall(op: &'static str, y: &DenseMatrix) -> Result<()> {
    if y.cols() > y.rows() {
        return Err(Error::dims(op, format!("cols <= rows ({})", y.rows()), y.cols()));
    }
    Ok(())
}

/// `AᵀA / s` for an s×d shard, exactly symmetric.
pub fn gram(shard: &DenseMatrix) -> DenseMatrix {
    let (s, d) = shard.shape();
    let inv = if s == 0 { 0.0 } else { 1.0 / s as f64 };
    let mut g = DenseMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let v = dot(shard.col(i), shard.col(j)) * inv;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mgs_oracle(y: &DenseMatrix) -> DenseMatrix {
        let mut q = y.clone();
        for j in 0..q.cols() {
            for i in 0..j {
                let proj: f64 = (0..q.rows()).map(|t| q[(t, i)] * q[(t, j)]).sum();
                for t in 0..q.rows() {
                    q[(t, j)] -= proj * q[(t, i)];
                }
            }
            let n: f64 = q.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            q.col_mut(j).iter_mut().for_each(|v| *v /= n);
        }
        q
    }

    #[test]
    fn orth_identity_columns() {
        let y = DenseMatrix::eye(3, 2);
        assert_eq!(orth(&y).unwrap().as_matrix(), &y);
    }

    #[test]
    fn orth_removes_diagonal_scaling() {
        let y = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 3.0], [0.0, 0.0]]).unwrap();
        assert_eq!(orth(&y).unwrap().as_matrix(), &DenseMatrix::eye(3, 2));
    }

    #[test]
    fn orth_matches_gram_schmidt_oracle() {
        let y = DenseMatrix::from_rows(&[
            [0.3, -1.2],
            [1.7, 0.4],
            [-0.5, 2.2],
            [0.9, 0.1],
            [-1.1, -0.7],
        ])
        .unwrap();
        let q = orth(&y).unwrap();
        // With nonnegative R diagonal, QR is unique: Q equals the MGS basis.
        assert!(q.as_matrix().max_abs_diff(&mgs_oracle(&y)) < 1e-14);
        let oracle = OrthonormalBasis::new(mgs_oracle(&y)).unwrap();
        assert!(projection_distance(&q, &oracle).unwrap() <= 1e-10);
    }

    #[test]
    fn orth_rank_deficient() {
        let y = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(orth(&y), Err(Error::RankDeficient { pivot: 1, .. })));
        let q = orth_completed(&y).unwrap();
        assert!(q.is_orthonormal(1e-14));
    }

    #[test]
    fn orth_wide_is_dimension_error() {
        assert!(matches!(
            orth(&DenseMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_examples() {
        assert_eq!(gram(&DenseMatrix::identity(2)), DenseMatrix::identity(2).scale(0.5));
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        // AᵀA = [[10,14],[14,20]]
        assert_eq!(
            gram(&a),
            DenseMatrix::from_rows(&[[5.0, 7.0], [7.0, 10.0]]).unwrap()
        );
        assert_eq!(gram(&DenseMatrix::zeros(3, 2)), DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn basis_validation() {
        let bad = DenseMatrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(OrthonormalBasis::new(bad).is_err());
        assert!(OrthonormalBasis::new(DenseMatrix::zeros(1, 2)).is_err());
    }
}
