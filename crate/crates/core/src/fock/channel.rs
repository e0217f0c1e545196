use nalgebra::DMatrix;
use num_complex::Complex64;

use super::density::DensityMatrix;
use crate::error::{Error, Result};

/// Pure-loss (beam-splitter) channel with transmission `eta`.
///
/// ρ'_mn = Σ_k √(C(m+k,k) C(n+k,k)) η^{(m+n)/2} (1−η)^k ρ_{m+k,n+k}.
/// Photon number never increases, so the cutoff is exact.
pub fn loss_channel(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::input(format!("transmission {eta} outside [0, 1]")));
    }
    let dim = rho.dim();
    if eta == 1.0 {
        return Ok(rho.clone());
    }
    if eta == 0.0 {
        return Ok(DensityMatrix::vacuum(rho.cutoff()));
    }
    let ln_fact = ln_factorials(2 * dim);
    let ln_binom = |a: usize, b: usize| ln_fact[a] - ln_fact[b] - ln_fact[a - b];
    let (ln_eta, ln_loss) = (eta.ln(), (1.0 - eta).ln());
    let out = DMatrix::from_fn(dim, dim, |m, n| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..(dim - m.max(n)) {
            let ln_w =
                0.5 * (ln_binom(m + k, k) + ln_binom(n + k, k)) + 0.5 * (m + n) as f64 * ln_eta + k as f64 * ln_loss;
            acc += rho.get(m + k, n + k) * ln_w.exp();
        }
        acc
    });
    DensityMatrix::from_positive_unnormalized(out)
}

/// ln(k!) for k = 0..=max.
pub(crate) fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}
