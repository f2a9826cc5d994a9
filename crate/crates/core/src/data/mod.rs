//! Dataset ingestion, feature scaling, row partitioning and synthetic
//! matrices with prescribed spectra.

mod libsvm;

pub use libsvm::{parse_libsvm, parse_libsvm_str, write_libsvm, LibsvmData};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, orth, DenseMatrix};
use crate::rng::{NoiseStream, StreamId};

/// Dense storage limit on n·d.
pub const MAX_DENSE_ENTRIES: usize = 100_000_000;

const AUX_SHUFFLE: u64 = 1;
const AUX_SYNTH_LEFT: u64 = 2;
const AUX_SYNTH_RIGHT: u64 = 3;

/// The global n×d matrix split by rows into m shards, with weights p_i = s_i/n.
#[derive(Clone, Debug)]
pub struct ShardedDataset {
    shards: Vec<DenseMatrix>,
    weights: Vec<f64>,
    n: usize,
    d: usize,
}

impl ShardedDataset {
    pub fn from_shards(shards: Vec<DenseMatrix>) -> Result<Self> {
        let Some(first) = shards.first() else {
            return Err(Error::InvalidConfig("dataset needs at least one shard".into()));
        };
        let d = first.cols();
        for (i, s) in shards.iter().enumerate() {
            if s.cols() != d {
                return Err(Error::dims("ShardedDataset", d, s.cols()));
            }
            if s.rows() == 0 {
                return Err(Error::InvalidConfig(format!("shard {i} is empty")));
            }
        }
        let n: usize = shards.iter().map(|s| s.rows()).sum();
        let weights = shards.iter().map(|s| s.rows() as f64 / n as f64).collect();
        Ok(Self {
            shards,
            weights,
            n,
            d,
        })
    }

    pub fn shards(&self) -> &[DenseMatrix] {
        &self.shards
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.rows()).collect()
    }

    pub fn min_shard(&self) -> usize {
        self.shards.iter().map(|s| s.rows()).min().unwrap_or(0)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    /// Local Gram matrices M_i = A_iᵀA_i / s_i.
    pub fn grams(&self) -> Vec<DenseMatrix> {
        self.shards.iter().map(gram).collect()
    }

    /// M = Σ p_i M_i, equal to AᵀA/n of the unsplit matrix.
    pub fn assembled_gram(&self) -> DenseMatrix {
        weighted_sum(&self.grams(), &self.weights)
    }

    /// The unsplit matrix, shards stacked in order.
    pub fn assemble(&self) -> DenseMatrix {
        DenseMatrix::vstack(&self.shards).expect("shards share a column count")
    }
}

pub(crate) fn weighted_sum(mats: &[DenseMatrix], weights: &[f64]) -> DenseMatrix {
    let (r, c) = mats[0].shape();
    let mut acc = DenseMatrix::zeros(r, c);
    for (m, w) in mats.iter().zip(weights) {
        acc.axpy(*w, m).expect("equal shapes");
    }
    acc
}

/// Divides each column by its largest absolute value; zero columns are kept.
pub fn scale_features(a: &DenseMatrix) -> DenseMatrix {
    let mut out = a.clone();
    for j in 0..out.cols() {
        let col = out.col_mut(j);
        let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            col.iter_mut().for_each(|v| *v /= peak);
        }
    }
    out
}

/// Stable sort of the rows by the value in `column`.
pub fn sort_rows_by_column(a: &DenseMatrix, column: usize) -> Result<DenseMatrix> {
    if column >= a.cols() {
        return Err(Error::InvalidConfig(format!(
            "sort column {column} out of range for {} columns",
            a.cols()
        )));
    }
    let mut idx: Vec<usize> = (0..a.rows()).collect();
    idx.sort_by(|&i, &j| a[(i, column)].total_cmp(&a[(j, column)]));
    Ok(a.select_rows(&idx))
}

/// How rows are assigned to shards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PartitionMode {
    Contiguous,
    Shuffled { seed: u64 },
}

/// Splits rows into `m` shards: the first `n mod m` shards get ⌈n/m⌉ rows,
/// the rest ⌊n/m⌋. `Shuffled` applies a seeded Fisher-Yates permutation first.
pub fn partition(a: &DenseMatrix, m: usize, mode: PartitionMode) -> Result<ShardedDataset> {
    let n = a.rows();
    if m == 0 || m > n {
        return Err(Error::TooManyShards { rows: n, shards: m });
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let PartitionMode::Shuffled { seed } = mode {
        let mut stream = NoiseStream::new(
            seed,
            StreamId::Aux {
                tag: AUX_SHUFFLE,
                index: 0,
            },
        );
        order.shuffle(stream.rng());
    }
    let base = n / m;
    let extra = n % m;
    let mut shards = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let size = base + usize::from(i < extra);
        shards.push(a.select_rows(&order[start..start + size]));
        start += size;
    }
    ShardedDataset::from_shards(shards)
}

/// Parameters of a synthetic matrix `A = U diag(σ) Vᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub singular_values: Vec<f64>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let q = self.singular_values.len();
        if q == 0 || q > self.n.min(self.d) {
            return Err(Error::InvalidConfig(format!(
                "need 1 ≤ #singular values ≤ min(n, d) = {}, got {q}",
                self.n.min(self.d)
            )));
        }
        if self.singular_values.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig("singular values must be positive".into()));
        }
        if self.singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("singular values must be non-increasing".into()));
        }
        if self.n.saturating_mul(self.d) > MAX_DENSE_ENTRIES {
            return Err(Error::InvalidConfig(format!(
                "n·d exceeds the dense limit {MAX_DENSE_ENTRIES}"
            )));
        }
        Ok(())
    }
}

/// Builds `A = U diag(σ) Vᵀ` with U, V orthonormalized seeded Gaussians.
pub fn synth(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let q = spec.singular_values.len();
    let left = |tag, rows| {
        NoiseStream::new(spec.seed, StreamId::Aux { tag, index: 0 }).gaussian_matrix(rows, q)
    };
    let u = orth(&left(AUX_SYNTH_LEFT, spec.n))?;
    let v = orth(&left(AUX_SYNTH_RIGHT, spec.d))?;
    let mut us = u.into_matrix();
    for (j, s) in spec.singular_values.iter().enumerate() {
        us.col_mut(j).iter_mut().for_each(|x| *x *= s);
    }
    us.matmul_t(v.as_matrix())
}
