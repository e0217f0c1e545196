//! Fock-basis numerical core: wavefunctions, homodyne POVM elements, the loss
//! channel, photon-number moments and phase-space functions.
//!
//! All quadratures use the vacuum-variance-1/2 convention.

mod channel;
mod density;
mod hermite;
mod projector;
mod stats;
mod wigner;

pub use channel::loss_channel;
pub use density::{DensityMatrix, DensityMatrixRecord, HERMITICITY_TOL, PSD_TOL};
pub use hermite::{hermite_fn, hermite_fns, hermite_fns_into, HERMITE_MAX_ORDER};
pub use projector::{
    bin_integral, gauss_legendre, projector_vector, quadrature_projector, MeasurementOperator, BIN_GL_ORDER,
    BIN_GL_PANELS,
};
pub use stats::{phase_averaged_variance, photon_statistics, PhotonStatistics};
pub use wigner::{marginal_pdf, wigner, wigner_origin};

use serde::{Deserialize, Serialize};

/// A single homodyne outcome: quadrature value and local-oscillator phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSample {
    /// Quadrature in vacuum-variance-1/2 units.
    pub value: f64,
    /// Phase in [0, 2π).
    pub phase: f64,
}

impl QuadratureSample {
    pub fn new(value: f64, phase: f64) -> crate::Result<Self> {
        if !value.is_finite() {
            return Err(crate::Error::Input(format!("quadrature value {value} is not finite")));
        }
        if !phase.is_finite() {
            return Err(crate::Error::Input(format!("phase {phase} is not finite")));
        }
        Ok(QuadratureSample {
            value,
            phase: normalize_phase(phase),
        })
    }
}

/// Maps any finite angle into [0, 2π).
pub fn normalize_phase(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = theta.rem_euclid(tau);
    // rem_euclid can round up to exactly τ for tiny negative inputs
    if r >= tau {
        0.0
    } else {
        r
    }
}
