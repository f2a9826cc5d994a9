#![allow(dead_code)]

use std::path::PathBuf;

use fedpower::data::{partition, sort_rows_by_column, synth, PartitionMode, ShardedDataset, SyntheticSpec};
use fedpower::linalg::{orth, DenseMatrix, OrthonormalBasis};
use fedpower::rng::{NoiseStream, StreamId};

pub fn housing_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/housing")
}

/// σ_i = 10·3^(−i/4) for i < k, then a geometric tail starting 1.5× below σ_k.
pub fn gapped_tail_spectrum(d: usize, k: usize) -> Vec<f64> {
    let head: Vec<f64> = (0..k).map(|i| 10.0 * 3f64.powf(-(i as f64) / 4.0)).collect();
    let start = head[k - 1] / 1.5;
    head.into_iter()
        .chain((0..d - k).map(|j| start * 0.9f64.powi(j as i32)))
        .collect()
}

/// σ_i = 10·1.2^(−i) for i < k, then a geometric tail starting 3× below σ_k.
pub fn clustered_head_spectrum(d: usize, k: usize) -> Vec<f64> {
    let head: Vec<f64> = (0..k).map(|i| 10.0 * 1.2f64.powi(-(i as i32))).collect();
    let start = head[k - 1] / 3.0;
    head.into_iter()
        .chain((0..d - k).map(|j| start * 0.9f64.powi(j as i32)))
        .collect()
}

/// Rows sorted by their first feature, split contiguously.
pub fn heterogeneous(n: usize, d: usize, k: usize, m: usize, seed: u64) -> ShardedDataset {
    heterogeneous_with(n, d, m, gapped_tail_spectrum(d, k), seed)
}

pub fn heterogeneous_with(n: usize, d: usize, m: usize, spectrum: Vec<f64>, seed: u64) -> ShardedDataset {
    let a = synth(&SyntheticSpec {
        n,
        d,
        singular_values: spectrum,
        seed,
    })
    .unwrap();
    let a = sort_rows_by_column(&a, 0).unwrap();
    partition(&a, m, PartitionMode::Contiguous).unwrap()
}

/// σ_i for i < k decreasing from 10, σ_{k+1} = σ_k / ratio, then a slow tail.
pub fn ratio_spectrum(d: usize, k: usize, ratio: f64) -> Vec<f64> {
    let head: Vec<f64> = (0..k).map(|i| 10.0 - i as f64).collect();
    let start = head[k - 1] / ratio;
    head.into_iter()
        .chain((0..d - k).map(|j| start * 0.95f64.powi(j as i32)))
        .collect()
}

pub fn random_basis(d: usize, r: usize, seed: u64, index: u64) -> OrthonormalBasis {
    let g = NoiseStream::new(seed, StreamId::Aux { tag: 900, index }).gaussian_matrix(d, r);
    orth(&g).unwrap()
}

pub fn gaussian(rows: usize, cols: usize, seed: u64, index: u64) -> DenseMatrix {
    NoiseStream::new(seed, StreamId::Aux { tag: 901, index }).gaussian_matrix(rows, cols)
}
