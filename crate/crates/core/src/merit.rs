//! Figures of merit of a heralded single-photon source.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{photon_statistics, wigner_origin, DensityMatrix};

/// g⁽²⁾(0) = ⟨n(n−1)⟩ / ⟨n⟩².
pub fn g2_zero(rho: &DensityMatrix) -> Result<f64> {
    let s = photon_statistics(rho);
    if s.mean_n <= 0.0 {
        return Err(Error::Undefined("g2(0) needs a non-zero mean photon number".into()));
    }
    Ok((s.mean_n_sq - s.mean_n) / (s.mean_n * s.mean_n))
}

/// Mandel Q = (⟨Δn²⟩ − ⟨n⟩) / ⟨n⟩.
pub fn mandel_q(rho: &DensityMatrix) -> Result<f64> {
    let s = photon_statistics(rho);
    if s.mean_n <= 0.0 {
        return Err(Error::Undefined("Mandel Q needs a non-zero mean photon number".into()));
    }
    Ok((s.mean_n_sq - s.mean_n * s.mean_n - s.mean_n) / s.mean_n)
}

/// Signal–idler cross-correlation from triggered and background quadrature
/// variances: (⟨ΔX²_trig⟩ − ½) / (⟨ΔX²_bck⟩ − ½).
pub fn g2_si(var_trig: f64, var_bck: f64) -> Result<f64> {
    if !(var_trig.is_finite() && var_bck.is_finite()) {
        return Err(Error::input("variances must be finite"));
    }
    if var_bck <= 0.5 {
        return Err(Error::Undefined(format!(
            "background variance {var_bck} does not exceed the vacuum level 1/2"
        )));
    }
    Ok((var_trig - 0.5) / (var_bck - 0.5))
}

/// Photons per second per MHz of bandwidth.
pub fn spectral_brightness(rate_hz: f64, bandwidth_mhz: f64) -> Result<f64> {
    for (name, v) in [("rate", rate_hz), ("bandwidth", bandwidth_mhz)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::input(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(rate_hz / bandwidth_mhz)
}

/// Optional measurements that refine the report beyond the state itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeritInputs {
    pub var_trig: Option<f64>,
    pub var_bck: Option<f64>,
    pub herald_rate_hz: Option<f64>,
    pub bandwidth_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritReport {
    pub rho11: f64,
    /// `None` when undefined (vacuum); see `notes`.
    pub g2_zero: Option<f64>,
    pub mandel_q: Option<f64>,
    pub g2_si: Option<f64>,
    pub bandwidth_mhz: Option<f64>,
    pub herald_rate_hz: Option<f64>,
    pub spectral_brightness_per_mhz_s: Option<f64>,
    pub wigner_origin: f64,
    pub mean_n: f64,
    pub notes: Vec<String>,
}

pub fn merit_report(rho: &DensityMatrix, inputs: &MeritInputs) -> Result<MeritReport> {
    let mut notes = Vec::new();
    let soft = |r: Result<f64>, notes: &mut Vec<String>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(msg)) => {
            notes.push(msg);
            Ok(None)
        }
        Err(e) => Err(e),
    };
    let g2 = soft(g2_zero(rho), &mut notes)?;
    let q = soft(mandel_q(rho), &mut notes)?;
    let g2_si = match (inputs.var_trig, inputs.var_bck) {
        (Some(t), Some(b)) => soft(g2_si(t, b), &mut notes)?,
        (None, None) => None,
        _ => return Err(Error::input("g2_si needs both triggered and background variances")),
    };
    let brightness = match (inputs.herald_rate_hz, inputs.bandwidth_mhz) {
        (Some(r), Some(b)) => Some(spectral_brightness(r, b)?),
        _ => None,
    };
    Ok(MeritReport {
        rho11: rho.population(1),
        g2_zero: g2,
        mandel_q: q,
        g2_si,
        bandwidth_mhz: inputs.bandwidth_mhz,
        herald_rate_hz: inputs.herald_rate_hz,
        spectral_brightness_per_mhz_s: brightness,
        wigner_origin: wigner_origin(rho),
        mean_n: photon_statistics(rho).mean_n,
        notes,
    })
}
