//! Device sampling and partial aggregation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::privacy::Scheme;
use crate::rng::NoiseStream;

/// Draws the participating set S_t, sorted ascending.
///
/// Scheme 1 draws `k` indices i.i.d. with probabilities `weights`
/// (repeats kept); Scheme 2 draws `k` distinct indices uniformly.
pub fn draw_participants(
    weights: &[f64],
    k: usize,
    scheme: Scheme,
    stream: &mut NoiseStream,
) -> Result<Vec<usize>> {
    let m = weights.len();
    if k == 0 || k > m {
        return Err(Error::InvalidConfig(format!(
            "participating devices K = {k} must lie in [1, {m}]"
        )));
    }
    let mut set = match scheme {
        Scheme::WithReplacement => {
            let dist = WeightedIndex::new(weights)
                .map_err(|e| Error::InvalidConfig(format!("sampling weights: {e}")))?;
            (0..k).map(|_| dist.sample(stream.rng())).collect::<Vec<_>>()
        }
        Scheme::WithoutReplacement => index::sample(stream.rng(), m, k).into_vec(),
    };
    set.sort_unstable();
    Ok(set)
}

/// Partial aggregation before server noise: (1/K)Σ_{i∈S} Y_i for Scheme 1,
/// (m/K)Σ_{i∈S} p_i Y_i for Scheme 2. `uploads[i]` is worker i's message;
/// repeated indices in `set` count with multiplicity. Sums run in the order of
/// `set`, which callers keep sorted.
pub fn aggregate_partial(
    uploads: &[DenseMatrix],
    weights: &[f64],
    set: &[usize],
    scheme: Scheme,
) -> DenseMatrix {
    let k = set.len() as f64;
    let m = weights.len() as f64;
    let (rows, cols) = uploads[set[0]].shape();
    let mut acc = DenseMatrix::zeros(rows, cols);
    for &i in set {
        let coef = match scheme {
            Scheme::WithReplacement => 1.0 / k,
            Scheme::WithoutReplacement => m / k * weights[i],
        };
        acc.axpy(coef, &uploads[i]).expect("uploads share a shape");
    }
    acc
}
