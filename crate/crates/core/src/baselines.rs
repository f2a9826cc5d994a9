//! Reference algorithms: the single-machine and distributed power methods,
//! and the one-shot UDA, WDA and DR-SVD estimators.

use crate::data::ShardedDataset;
use crate::engine::initial_basis;
use crate::error::{Error, Result};
use crate::linalg::{orth, orth_completed, svd, DenseMatrix, OrthonormalBasis, SvdResult};
use crate::rng::{NoiseStream, StreamId};

const AUX_DR_SVD: u64 = 5;

/// Power iterations `Y ← MZ, Z ← orth(Y)` from the shared seeded Z_0.
/// Returns Z_0, Z_1, ..., Z_T.
pub fn power_iterates(m: &DenseMatrix, r: usize, iterations: usize, seed: u64) -> Result<Vec<OrthonormalBasis>> {
    if m.rows() != m.cols() {
        return Err(Error::dims("power_method", "square matrix", format!("{:?}", m.shape())));
    }
    if r == 0 || r > m.rows() {
        return Err(Error::InvalidConfig(format!(
            "iteration rank {r} must lie in [1, {}]",
            m.rows()
        )));
    }
    let mut z = initial_basis(m.rows(), r, seed)?;
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(z.clone());
    for _ in 0..iterations {
        z = orth(&m.matmul(z.as_matrix())?)?;
        out.push(z.clone());
    }
    Ok(out)
}

pub fn power_method(m: &DenseMatrix, r: usize, iterations: usize, seed: u64) -> Result<OrthonormalBasis> {
    Ok(power_iterates(m, r, iterations, seed)?
        .pop()
        .expect("at least Z_0"))
}

/// Distributed power method: each worker forms M_i Z, the server sums
/// Σ p_i M_i Z and orthonormalizes. Returns Z_0, ..., Z_T.
pub fn distributed_power_iterates(
    dataset: &ShardedDataset,
    r: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<OrthonormalBasis>> {
    let d = dataset.d();
    if r == 0 || r > d {
        return Err(Error::InvalidConfig(format!("iteration rank {r} must lie in [1, {d}]")));
    }
    let grams = dataset.grams();
    let mut z = initial_basis(d, r, seed)?;
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(z.clone());
    for _ in 0..iterations {
        let mut y = DenseMatrix::zeros(d, r);
        for (g, p) in grams.iter().zip(dataset.weights()) {
            y.axpy(*p, &g.matmul(z.as_matrix())?)?;
        }
        z = orth(&y)?;
        out.push(z.clone());
    }
    Ok(out)
}

pub fn distributed_power(
    dataset: &ShardedDataset,
    r: usize,
    iterations: usize,
    seed: u64,
) -> Result<OrthonormalBasis> {
    Ok(distributed_power_iterates(dataset, r, iterations, seed)?
        .pop()
        .expect("at least Z_0"))
}

fn check_rank(dataset: &ShardedDataset, k: usize) -> Result<()> {
    if k == 0 || k > dataset.d() {
        return Err(Error::InvalidConfig(format!(
            "target rank {k} must lie in [1, {}]",
            dataset.d()
        )));
    }
    Ok(())
}

/// Top-k eigenpairs of a symmetric PSD matrix, via the SVD.
fn top_eigen(m: &DenseMatrix, k: usize) -> Result<SvdResult> {
    let f = svd(m)?.truncate(k);
    Ok(SvdResult {
        u: f.v.clone(),
        singular_values: f.singular_values,
        v: f.v,
    })
}

fn averaged_projectors(dataset: &ShardedDataset, k: usize, weighted: bool) -> Result<DenseMatrix> {
    check_rank(dataset, k)?;
    let d = dataset.d();
    let mut acc = DenseMatrix::zeros(d, d);
    let inv_m = 1.0 / dataset.m() as f64;
    for g in dataset.grams() {
        let local = svd(&g)?.truncate(k);
        let mut scaled = local.v.as_matrix().clone();
        if weighted {
            for (j, s) in local.singular_values.iter().enumerate() {
                scaled.col_mut(j).iter_mut().for_each(|x| *x *= s);
            }
        }
        acc.axpy(inv_m, &scaled.matmul_t(local.v.as_matrix())?)?;
    }
    // Symmetrize away rounding so the eigen-solve sees an exactly symmetric matrix.
    let sym = acc.add(&acc.transpose())?.scale(0.5);
    Ok(sym)
}

/// UDA's aggregated matrix M̃ = (1/m) Σ V̂_i V̂_iᵀ.
pub fn uda_matrix(dataset: &ShardedDataset, k: usize) -> Result<DenseMatrix> {
    averaged_projectors(dataset, k, false)
}

/// WDA's aggregated matrix M̃ = (1/m) Σ V̂_i Σ_i V̂_iᵀ.
pub fn wda_matrix(dataset: &ShardedDataset, k: usize) -> Result<DenseMatrix> {
    averaged_projectors(dataset, k, true)
}

/// Unweighted distributed averaging: top-k eigenpairs of (1/m) Σ V̂_i V̂_iᵀ.
pub fn uda(dataset: &ShardedDataset, k: usize) -> Result<SvdResult> {
    top_eigen(&uda_matrix(dataset, k)?, k)
}

/// Weighted distributed averaging: top-k eigenpairs of (1/m) Σ V̂_i Σ_i V̂_iᵀ.
pub fn wda(dataset: &ShardedDataset, k: usize) -> Result<SvdResult> {
    top_eigen(&wda_matrix(dataset, k)?, k)
}

/// Intermediate quantities of a DR-SVD run.
#[derive(Clone, Debug)]
pub struct DrSvd {
    pub result: SvdResult,
    /// Oversampled rank r = k + ⌊(d − k)/4⌋.
    pub r: usize,
    /// n×r orthonormal range basis Q.
    pub q: OrthonormalBasis,
    /// B = Σ Q_iᵀ A_i.
    pub b: DenseMatrix,
}

/// Oversampled rank used by DR-SVD.
pub fn dr_svd_rank(d: usize, k: usize) -> usize {
    k + (d - k) / 4
}

/// Distributed randomized SVD. The server forms Y = A(AᵀAΩ) from the
/// stacked shards; workers then return B_i = Q_iᵀA_i for their row block.
///
/// When A has rank below r the range basis is completed by Householder, so
/// Q is orthonormal regardless.
pub fn dr_svd_detailed(dataset: &ShardedDataset, k: usize, seed: u64) -> Result<DrSvd> {
    check_rank(dataset, k)?;
    let d = dataset.d();
    let r = dr_svd_rank(d, k);
    if dataset.n() < r {
        return Err(Error::InvalidConfig(format!(
            "DR-SVD needs n ≥ r = {r}, got n = {}",
            dataset.n()
        )));
    }
    let omega = NoiseStream::new(seed, StreamId::Aux { tag: AUX_DR_SVD, index: 0 }).gaussian_matrix(d, r);
    let a = dataset.assemble();
    let y = a.matmul(&a.t_matmul(&a.matmul(&omega)?)?)?;
    let q = orth_completed(&y)?;

    let mut b = DenseMatrix::zeros(r, d);
    let mut offset = 0;
    for shard in dataset.shards() {
        let rows: Vec<usize> = (offset..offset + shard.rows()).collect();
        let q_i = q.as_matrix().select_rows(&rows);
        b.axpy(1.0, &q_i.t_matmul(shard)?)?;
        offset += shard.rows();
    }

    let f = svd(&b)?;
    let u_hat = q.as_matrix().matmul(f.u.as_matrix())?;
    let result = SvdResult {
        u: OrthonormalBasis::new(u_hat.leading_cols(k))?,
        singular_values: f.singular_values[..k].to_vec(),
        v: f.v.leading(k),
    };
    Ok(DrSvd { result, r, q, b })
}

pub fn dr_svd(dataset: &ShardedDataset, k: usize, seed: u64) -> Result<SvdResult> {
    Ok(dr_svd_detailed(dataset, k, seed)?.result)
}
