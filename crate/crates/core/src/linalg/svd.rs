//! Dense SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Tall inputs are first reduced with Householder QR so the rotations act on
//! a square triangular factor. The method converges to high relative accuracy
//! and is deterministic for a fixed input: pairs are swept in a fixed cyclic
//! order and the output is sorted by a stable sort.

use super::qr::householder_qr;
use super::{DenseMatrix, OrthonormalBasis, SvdResult};
use crate::error::{Error, Result};

/// Sweep cap before reporting [`Error::ConvergenceFailure`].
pub const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(s) Vᵀ` with `p = min(rows, cols)` triplets.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    a.ensure_finite()?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(SvdResult {
            u: OrthonormalBasis::from_trusted(DenseMatrix::zeros(m, 0)),
            singular_values: Vec::new(),
            v: OrthonormalBasis::from_trusted(DenseMatrix::zeros(n, 0)),
        });
    }
    if m < n {
        let t = svd(&a.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }

    let (q, r) = if m > n {
        let (q, r) = householder_qr(a);
        (Some(q), r)
    } else {
        (None, a.clone())
    };

    let (u_r, s, v) = jacobi_square(&r)?;
    let u = match q {
        Some(q) => q.matmul(&u_r)?,
        None => u_r,
    };
    Ok(SvdResult {
        u: OrthonormalBasis::from_trusted(u),
        singular_values: s,
        v: OrthonormalBasis::from_trusted(v),
    })
}

/// One-sided Jacobi on a square matrix. Returns `(U, s, V)` sorted descending,
/// with the columns of `U` for zero singular values completed to an
/// orthonormal set.
fn jacobi_square(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let n = a.cols();
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);

    let tol = f64::EPSILON * (a.rows() as f64).sqrt();
    let mut converged = n < 2;
    let mut sweeps = 0;
    let mut residual = 0.0f64;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::ConvergenceFailure { sweeps, residual });
        }
        sweeps += 1;
        converged = true;
        residual = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = w.col(p);
                    let cq = w.col(q);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| w.col(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let zero_cut = scale * f64::EPSILON * n as f64;

    let mut u = DenseMatrix::zeros(n, n);
    let mut v_sorted = DenseMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        v_sorted.col_mut(dst).copy_from_slice(v.col(src));
        if sigma > zero_cut && sigma > 0.0 {
            for (o, x) in u.col_mut(dst).iter_mut().zip(w.col(src)) {
                *o = x / sigma;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_columns(&mut u, &missing);
    Ok((u, s, v_sorted))
}

fn rotate(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every
/// other column. Candidates are canonical basis vectors, chosen by largest
/// residual after two passes of Gram-Schmidt.
pub(crate) fn complete_columns(u: &mut DenseMatrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !missing.contains(j)).collect();
    for &target in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            for _ in 0..2 {
                for &j in &filled {
                    let col = u.col(j);
                    let proj: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
                    for (c, x) in cand.iter_mut().zip(col) {
                        *c -= proj * x;
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("n >= 1");
        for (o, x) in u.col_mut(target).iter_mut().zip(&cand) {
            *o = x / norm;
        }
        filled.push(target);
    }
}
