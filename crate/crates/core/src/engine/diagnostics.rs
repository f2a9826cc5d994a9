use super::Alignment;
use crate::data::ShardedDataset;
use crate::error::{Error, Result};
use crate::linalg::{procrustes, sign_fix, spectral_norm, DenseMatrix};

/// Alignment matrix D for `z_i` against `z_base`; `None` means D = I.
pub(crate) fn alignment_matrix(
    alignment: Alignment,
    z_i: &DenseMatrix,
    z_base: &DenseMatrix,
) -> Result<Option<DenseMatrix>> {
    match alignment {
        Alignment::None => Ok(None),
        Alignment::Opt => procrustes(z_i, z_base).map(Some),
        Alignment::SignFix => sign_fix(z_i, z_base).map(Some),
    }
}

pub(crate) fn apply(z: &DenseMatrix, d: Option<&DenseMatrix>) -> DenseMatrix {
    match d {
        Some(d) => z.matmul(d).expect("D is r×r"),
        None => z.clone(),
    }
}

/// Residual error: max_i ‖Z_i D_i − Z_base‖_2 with D_i from `alignment`.
pub fn residual_rho(workers: &[DenseMatrix], alignment: Alignment, baseline: usize) -> Result<f64> {
    let Some(base) = workers.get(baseline) else {
        return Err(Error::InvalidConfig(format!(
            "baseline {baseline} out of range for {} workers",
            workers.len()
        )));
    };
    let mut worst = 0.0f64;
    for (i, z) in workers.iter().enumerate() {
        if i == baseline {
            continue;
        }
        let d = alignment_matrix(alignment, z, base)?;
        let diff = apply(z, d.as_ref()).sub(base)?;
        worst = worst.max(spectral_norm(&diff)?);
    }
    Ok(worst)
}

/// Smallest η with ‖M_i − M‖_2 ≤ η‖M‖_2 for every shard.
pub fn local_approx_eta(dataset: &ShardedDataset) -> Result<f64> {
    let grams = dataset.grams();
    let m = crate::data::weighted_sum(&grams, dataset.weights());
    let norm = spectral_norm(&m)?;
    if norm == 0.0 {
        return Err(Error::DegenerateData("assembled Gram matrix is zero".into()));
    }
    let mut worst = 0.0f64;
    for g in &grams {
        worst = worst.max(spectral_norm(&g.sub(&m)?)?);
    }
    Ok(worst / norm)
}

/// Baseline worker for alignment.
///
/// Without an active set: the largest weight, ties to the lowest index.
/// With an active set: its lowest index.
pub fn baseline_index(weights: &[f64], active: Option<&[usize]>) -> usize {
    match active {
        Some(set) if !set.is_empty() => *set.iter().min().expect("nonempty"),
        _ => {
            let mut best = 0;
            for (i, w) in weights.iter().enumerate() {
                if *w > weights[best] {
                    best = i;
                }
            }
            best
        }
    }
}
