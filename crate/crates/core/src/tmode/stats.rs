use nalgebra::DMatrix;

use super::trace::TraceSet;
use crate::error::{Error, Result};
use crate::reduce::{fold_indices, Reduction};

fn require_two(set: &TraceSet) -> Result<()> {
    if set.len() < 2 {
        return Err(Error::input(format!("need at least 2 traces, got {}", set.len())));
    }
    Ok(())
}

/// Per-index mean over traces.
pub fn mean_profile(set: &TraceSet, mode: Reduction) -> Vec<f64> {
    let n = set.n_samples();
    let sums = fold_indices(
        set.len(),
        mode,
        || vec![0.0; n],
        |mut acc, range| {
            for t in range {
                for (a, x) in acc.iter_mut().zip(set.row(t)) {
                    *a += x;
                }
            }
            acc
        },
        add_vecs,
    );
    let inv = 1.0 / set.len().max(1) as f64;
    sums.into_iter().map(|s| s * inv).collect()
}

/// Unbiased variance across traces at every sample index.
pub fn variance_profile(set: &TraceSet) -> Result<Vec<f64>> {
    variance_profile_with(set, Reduction::FixedOrder)
}

pub fn variance_profile_with(set: &TraceSet, mode: Reduction) -> Result<Vec<f64>> {
    require_two(set)?;
    let n = set.n_samples();
    let mean = mean_profile(set, mode);
    let ss = fold_indices(
        set.len(),
        mode,
        || vec![0.0; n],
        |mut acc, range| {
            for t in range {
                for ((a, x), m) in acc.iter_mut().zip(set.row(t)).zip(&mean) {
                    let d = x - m;
                    *a += d * d;
                }
            }
            acc
        },
        add_vecs,
    );
    let inv = 1.0 / (set.len() - 1) as f64;
    Ok(ss.into_iter().map(|s| s * inv).collect())
}

/// Mean-subtracted second-moment matrix A_ij of the photocurrent.
///
/// Normalized by N − 1 so that its diagonal equals [`variance_profile`].
/// Only the upper triangle is accumulated; the lower one is a copy, so the
/// result is exactly symmetric.
pub fn autocorrelation_matrix(set: &TraceSet) -> Result<DMatrix<f64>> {
    autocorrelation_matrix_with(set, Reduction::FixedOrder)
}

pub fn autocorrelation_matrix_with(set: &TraceSet, mode: Reduction) -> Result<DMatrix<f64>> {
    require_two(set)?;
    let n = set.n_samples();
    let mean = mean_profile(set, mode);
    let tri_len = n * (n + 1) / 2;
    let tri = fold_indices(
        set.len(),
        mode,
        || vec![0.0; tri_len],
        |mut acc, range| {
            let mut centred = vec![0.0; n];
            for t in range {
                for ((c, x), m) in centred.iter_mut().zip(set.row(t)).zip(&mean) {
                    *c = x - m;
                }
                let mut k = 0;
                for i in 0..n {
                    let ci = centred[i];
                    for (a, cj) in acc[k..k + (n - i)].iter_mut().zip(&centred[i..]) {
                        *a += ci * cj;
                    }
                    k += n - i;
                }
            }
            acc
        },
        add_vecs,
    );
    let inv = 1.0 / (set.len() - 1) as f64;
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            out[(i, j)] = tri[k] * inv;
            out[(j, i)] = tri[k] * inv;
            k += 1;
        }
    }
    Ok(out)
}

fn add_vecs(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}
