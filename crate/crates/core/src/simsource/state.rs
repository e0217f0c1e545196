use crate::error::{Error, Result};
use crate::fock::{loss_channel, DensityMatrix};

use super::params::SourceParams;

/// Population discarded by truncation above which a warning is logged.
pub const TRUNCATION_WARN: f64 = 1e-6;

/// Thermal state ρ_nn = n̄ⁿ/(1+n̄)^{n+1}, truncated at the cutoff and renormalized.
pub fn background_state(params: &SourceParams) -> Result<DensityMatrix> {
    thermal_state(params.bg_thermal_n, params.cutoff)
}

pub fn thermal_state(mean_n: f64, cutoff: usize) -> Result<DensityMatrix> {
    if !(mean_n >= 0.0 && mean_n.is_finite()) {
        return Err(Error::input(format!(
            "thermal mean photon number {mean_n} must be non-negative"
        )));
    }
    if mean_n == 0.0 {
        return Ok(DensityMatrix::vacuum(cutoff));
    }
    let ratio = mean_n / (1.0 + mean_n);
    let probs: Vec<f64> = (0..=cutoff).map(|n| ratio.powi(n as i32) / (1.0 + mean_n)).collect();
    let discarded = ratio.powi(cutoff as i32 + 1);
    if discarded > TRUNCATION_WARN {
        log::warn!("thermal state n̄ = {mean_n} loses {discarded:.2e} of its population above cutoff {cutoff}");
    }
    DensityMatrix::from_diagonal(&probs)
}

/// Signal state conditioned on an idler click, after signal loss and false heralds.
///
/// The TMSV is truncated at the cutoff before conditioning; loss never raises
/// photon number, so no further truncation happens.
pub fn heralded_state(params: &SourceParams) -> Result<DensityMatrix> {
    params.validate_state()?;
    let background = background_state(params)?;
    if params.false_herald_prob == 1.0 {
        return Ok(background);
    }
    let l2 = params.lambda_sq;
    let miss = 1.0 - params.eta_idler;
    let weights: Vec<f64> = (0..=params.cutoff)
        .map(|n| (1.0 - l2) * l2.powi(n as i32) * (1.0 - miss.powi(n as i32)))
        .collect();
    let click_prob: f64 = weights.iter().sum();
    if click_prob <= 0.0 {
        return Err(Error::Degenerate(
            "heralding impossible: click probability is zero for every photon number".into(),
        ));
    }
    // upper bound on the click weight of |n⟩ beyond the cutoff
    let tail = l2.powi(params.cutoff as i32 + 1);
    if tail / click_prob > TRUNCATION_WARN {
        log::warn!(
            "heralded state truncation at cutoff {} discards up to {:.2e} of the conditional population",
            params.cutoff,
            tail / click_prob
        );
    }
    let conditional = DensityMatrix::from_diagonal(&weights)?;
    let lossy = loss_channel(&conditional, params.eta_signal)?;
    lossy.mix(&background, params.false_herald_prob)
}
