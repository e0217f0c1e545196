use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tmode::{TemporalMode, MIN_TRACE_LEN};

/// Shape of the heralded photon's temporal mode inside the acquisition window.
///
/// Times are measured in ns from the first sample of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModeShape {
    /// Gaussian amplitude; `fwhm_ns` is the FWHM of |ψ(t)|².
    Gaussian { center_ns: f64, fwhm_ns: f64 },
    /// Gaussian core with two opposite-sign satellites at ±`lobe_offset_ns`,
    /// each scaled by `lobe_amplitude` relative to the core.
    SideLobe {
        center_ns: f64,
        fwhm_ns: f64,
        lobe_offset_ns: f64,
        lobe_amplitude: f64,
    },
    /// Sampled mode, one value per trace sample (normalized on use).
    Explicit { psi: Vec<f64> },
}

/// Fraction of |ψ|² allowed in the first or last window sample.
const EDGE_WEIGHT_LIMIT: f64 = 1e-6;

impl ModeShape {
    /// Samples the shape on the trace grid and normalizes to Σψ_i² = 1.
    pub fn discretize(&self, n_samples: usize, dt_ns: f64) -> Result<TemporalMode> {
        let gauss = |t: f64, centre: f64, fwhm: f64| {
            let sigma = fwhm / (8.0 * 2f64.ln()).sqrt();
            let d = t - centre;
            (-d * d / (4.0 * sigma * sigma)).exp()
        };
        let times = (0..n_samples).map(|i| i as f64 * dt_ns);
        let psi: Vec<f64> = match self {
            ModeShape::Gaussian { center_ns, fwhm_ns } => {
                check_positive("fwhm_ns", *fwhm_ns)?;
                times.map(|t| gauss(t, *center_ns, *fwhm_ns)).collect()
            }
            ModeShape::SideLobe {
                center_ns,
                fwhm_ns,
                lobe_offset_ns,
                lobe_amplitude,
            } => {
                check_positive("fwhm_ns", *fwhm_ns)?;
                check_positive("lobe_offset_ns", *lobe_offset_ns)?;
                if !(0.0..1.0).contains(lobe_amplitude) {
                    return Err(Error::input(format!("lobe amplitude {lobe_amplitude} outside [0, 1)")));
                }
                times
                    .map(|t| {
                        gauss(t, *center_ns, *fwhm_ns)
                            - lobe_amplitude
                                * (gauss(t, center_ns - lobe_offset_ns, *fwhm_ns)
                                    + gauss(t, center_ns + lobe_offset_ns, *fwhm_ns))
                    })
                    .collect()
            }
            ModeShape::Explicit { psi } => {
                if psi.len() != n_samples {
                    return Err(Error::input(format!(
                        "explicit mode has {} samples, trace has {n_samples}",
                        psi.len()
                    )));
                }
                psi.clone()
            }
        };
        let mode = TemporalMode::from_samples(psi, dt_ns)?;
        let edge = mode.psi()[0].powi(2).max(mode.psi()[n_samples - 1].powi(2));
        if !matches!(self, ModeShape::Explicit { .. }) && edge > EDGE_WEIGHT_LIMIT {
            return Err(Error::input(format!(
                "mode support does not fit the {:.1} ns window (edge weight {edge:.2e})",
                n_samples as f64 * dt_ns
            )));
        }
        Ok(mode)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::input(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Acquisition window geometry and detector noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub n_samples: usize,
    pub dt_ns: f64,
    /// Sample index of the herald trigger within the window.
    pub trigger_index: usize,
    pub mode_shape: ModeShape,
    /// Variance of white electronic noise added per sample, in vacuum units.
    #[serde(default)]
    pub electronic_noise_var: f64,
}

/// Effective parameters of the heralded two-mode squeezed source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// λ² of the TMSV Σ √(1−λ²) λⁿ |n, n⟩.
    pub lambda_sq: f64,
    /// Signal path transmission including homodyne efficiency.
    pub eta_signal: f64,
    /// Idler path transmission including click-detector efficiency.
    pub eta_idler: f64,
    /// Probability that a herald is uncorrelated with the signal.
    pub false_herald_prob: f64,
    /// Mean photon number of the thermal background per temporal mode.
    pub bg_thermal_n: f64,
    pub cutoff: usize,
    pub trace: TraceConfig,
    /// Detector-level herald rate; reported only, never used in state math.
    #[serde(default)]
    pub herald_rate_hz: Option<f64>,
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        self.validate_state()?;
        self.validate_trace()
    }

    /// Checks the fields entering the state model.
    pub fn validate_state(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda_sq) {
            return Err(Error::input(format!("lambda_sq {} outside [0, 1)", self.lambda_sq)));
        }
        for (name, v) in [
            ("eta_signal", self.eta_signal),
            ("eta_idler", self.eta_idler),
            ("false_herald_prob", self.false_herald_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.bg_thermal_n >= 0.0 && self.bg_thermal_n.is_finite()) {
            return Err(Error::input(format!(
                "bg_thermal_n {} must be non-negative",
                self.bg_thermal_n
            )));
        }
        if self.cutoff == 0 {
            return Err(Error::input("cutoff must be at least 1"));
        }
        if let Some(rate) = self.herald_rate_hz {
            check_positive("herald_rate_hz", rate)?;
        }
        Ok(())
    }

    /// Checks the acquisition window and that the mode fits inside it.
    pub fn validate_trace(&self) -> Result<()> {
        let t = &self.trace;
        if t.n_samples < MIN_TRACE_LEN {
            return Err(Error::input(format!("need at least {MIN_TRACE_LEN} samples per trace")));
        }
        if !(t.electronic_noise_var >= 0.0 && t.electronic_noise_var.is_finite()) {
            return Err(Error::input("electronic noise variance must be non-negative"));
        }
        if t.trigger_index >= t.n_samples {
            return Err(Error::input("trigger index outside the window"));
        }
        self.mode().map(|_| ())
    }

    pub fn mode(&self) -> Result<TemporalMode> {
        self.trace.mode_shape.discretize(self.trace.n_samples, self.trace.dt_ns)
    }

    /// High-gain regime: ρ₁₁ ≈ 0.49 with a few-percent two- and three-photon
    /// tail, 2.3× vacuum peak variance and a 39 MHz Gaussian mode sampled at
    /// 100 MS/s over 180 ns.
    pub fn paper_scale() -> Self {
        SourceParams {
            lambda_sq: 0.187,
            eta_signal: 0.6,
            eta_idler: 0.1,
            false_herald_prob: 0.109,
            bg_thermal_n: 0.123,
            cutoff: 10,
            trace: TraceConfig {
                n_samples: 18,
                dt_ns: 10.0,
                trigger_index: 6,
                mode_shape: ModeShape::paper_gaussian(),
                electronic_noise_var: 0.0,
            },
            herald_rate_hz: Some(300_000.0),
        }
    }

    /// Low-gain regime: ρ₁₁ ≈ 0.21 with a negligible two-photon component.
    pub fn low_gain() -> Self {
        SourceParams {
            lambda_sq: 0.003,
            eta_signal: 0.25,
            eta_idler: 0.1,
            false_herald_prob: 0.15,
            bg_thermal_n: 0.009,
            ..Self::paper_scale()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-scale" => Ok(Self::paper_scale()),
            "low-gain" => Ok(Self::low_gain()),
            other => Err(Error::input(format!(
                "unknown preset '{other}' (expected 'paper-scale' or 'low-gain')"
            ))),
        }
    }
}

impl ModeShape {
    /// Gaussian with 11.25 ns intensity FWHM centred on the trigger sample.
    pub fn paper_gaussian() -> Self {
        ModeShape::Gaussian {
            center_ns: 60.0,
            fwhm_ns: 11.25,
        }
    }

    /// Same core with negative satellites 20 ns away, as produced by a
    /// detuned idler filter.
    pub fn paper_side_lobe() -> Self {
        ModeShape::SideLobe {
            center_ns: 60.0,
            fwhm_ns: 11.25,
            lobe_offset_ns: 20.0,
            lobe_amplitude: 0.3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        SourceParams::paper_scale().validate().unwrap();
        SourceParams::low_gain().validate().unwrap();
        assert!(SourceParams::preset("nope").is_err());
    }

    #[test]
    fn discretized_modes_are_unit_norm() {
        for shape in [ModeShape::paper_gaussian(), ModeShape::paper_side_lobe()] {
            let m = shape.discretize(18, 10.0).unwrap();
            let norm: f64 = m.psi().iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn side_lobes_are_negative() {
        let m = ModeShape::paper_side_lobe().discretize(18, 10.0).unwrap();
        assert!(m.psi()[4] < 0.0 && m.psi()[8] < 0.0);
        assert!(m.psi()[6] > 0.0);
    }

    #[test]
    fn mode_must_fit_window() {
        let shape = ModeShape::Gaussian {
            center_ns: 2.0,
            fwhm_ns: 10.0,
        };
        assert!(shape.discretize(18, 10.0).is_err());
        let explicit = ModeShape::Explicit { psi: vec![1.0; 5] };
        assert!(explicit.discretize(18, 10.0).is_err());
    }

    #[test]
    fn invalid_parameters() {
        let mut p = SourceParams::paper_scale();
        p.lambda_sq = 1.0;
        assert!(p.validate().is_err());
        let mut p = SourceParams::paper_scale();
        p.eta_idler = 1.5;
        assert!(p.validate().is_err());
        let mut p = SourceParams::paper_scale();
        p.bg_thermal_n = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let mut v = serde_json::to_value(SourceParams::paper_scale()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<SourceParams>(v).is_err());
    }
}
