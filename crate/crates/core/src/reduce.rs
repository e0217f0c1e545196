//! Chunked reductions over index ranges.
//!
//! Every accumulation in the crate (autocorrelation, R-operator, log-likelihood)
//! goes through [`fold_indices`]. In [`Reduction::FixedOrder`] mode the index
//! space is cut into fixed-size chunks whose partial results are merged strictly
//! left to right, so the floating-point result does not depend on the number of
//! worker threads.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of indices folded sequentially before partials are merged.
pub const CHUNK_LEN: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Chunk partials merged in chunk order: bit-exact for any thread count.
    #[default]
    FixedOrder,
    /// Rayon tree reduction; merge order depends on scheduling.
    Parallel,
}

pub fn fold_indices<A, I, F, M>(len: usize, mode: Reduction, identity: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, Range<usize>) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let n_chunks = len.div_ceil(CHUNK_LEN);
    let range_of = |c: usize| c * CHUNK_LEN..((c + 1) * CHUNK_LEN).min(len);
    match mode {
        Reduction::FixedOrder => {
            let partials: Vec<A> = (0..n_chunks)
                .into_par_iter()
                .map(|c| fold(identity(), range_of(c)))
                .collect();
            partials.into_iter().fold(identity(), &merge)
        }
        Reduction::Parallel => (0..n_chunks)
            .into_par_iter()
            .map(|c| fold(identity(), range_of(c)))
            .reduce(&identity, &merge),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_order_matches_sequential_chunk_sum() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let got = fold_indices(
            xs.len(),
            Reduction::FixedOrder,
            || 0.0,
            |acc, r| acc + xs[r].iter().sum::<f64>(),
            |a, b| a + b,
        );
        let mut want = 0.0;
        for chunk in xs.chunks(CHUNK_LEN) {
            want += chunk.iter().sum::<f64>();
        }
        assert_eq!(got.to_bits(), want.to_bits());
    }

    #[test]
    fn empty_range_yields_identity() {
        let got = fold_indices(0, Reduction::Parallel, || 7usize, |a, r| a + r.len(), |a, b| a + b);
        assert_eq!(got, 7);
    }
}
