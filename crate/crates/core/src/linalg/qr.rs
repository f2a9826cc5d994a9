//! Householder QR with a nonnegative-diagonal sign convention.

use super::DenseMatrix;

/// Thin Householder QR of a tall matrix (`rows >= cols`).
///
/// Returns `(Q, R)` with `Q` of shape rows×cols having orthonormal columns and
/// `R` upper triangular with `R[j,j] >= 0`. When a column is already annihilated
/// the reflector is skipped, so `Q` stays orthonormal even for rank-deficient
/// input; the corresponding `R[j,j]` is then zero.
pub fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (m, n) = a.shape();
    assert!(m >= n, "householder_qr needs rows >= cols, got {m}x{n}");

    let mut work = a.clone();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut diag = vec![0.0; n];

    for j in 0..n {
        let x = &work.col(j)[j..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = x.to_vec();
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            diag[j] = x[0];
            continue;
        }
        v.iter_mut().for_each(|t| *t /= vnorm);

        for c in j..n {
            let col = &mut work.col_mut(c)[j..];
            let proj: f64 = 2.0 * v.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (dst, vi) in col.iter_mut().zip(&v) {
                *dst -= proj * vi;
            }
        }
        diag[j] = alpha;
        reflectors.push(Some(v));
    }

    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            r[(i, j)] = work[(i, j)];
        }
        r[(j, j)] = diag[j];
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the leading n columns of I_m.
    let mut q = DenseMatrix::eye(m, n);
    for j in (0..n).rev() {
        if let Some(v) = &reflectors[j] {
            for c in 0..n {
                let col = &mut q.col_mut(c)[j..];
                let proj: f64 = 2.0 * v.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>();
                if proj != 0.0 {
                    for (dst, vi) in col.iter_mut().zip(v) {
                        *dst -= proj * vi;
                    }
                }
            }
        }
    }

    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.col_mut(j).iter_mut().for_each(|v| *v = -*v);
            for c in j..n {
                r[(j, c)] = -r[(j, c)];
            }
        }
    }
    (q, r)
}
