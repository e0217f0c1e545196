use serde::{Deserialize, Serialize};

use super::density::DensityMatrix;

/// Photon-number moments of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonStatistics {
    /// ⟨n̂⟩
    pub mean_n: f64,
    /// ⟨n̂²⟩
    pub mean_n_sq: f64,
    /// ⟨â†â†ââ⟩ = ⟨n̂(n̂−1)⟩
    pub mean_aadagger2: f64,
}

pub fn photon_statistics(rho: &DensityMatrix) -> PhotonStatistics {
    let mut s = PhotonStatistics {
        mean_n: 0.0,
        mean_n_sq: 0.0,
        mean_aadagger2: 0.0,
    };
    for (n, p) in rho.diagonal().into_iter().enumerate() {
        let n = n as f64;
        s.mean_n += n * p;
        s.mean_n_sq += n * n * p;
        s.mean_aadagger2 += n * (n - 1.0) * p;
    }
    s
}

/// Quadrature variance of a phase-averaged state: ⟨n̂⟩ + 1/2.
pub fn phase_averaged_variance(rho: &DensityMatrix) -> f64 {
    photon_statistics(rho).mean_n + 0.5
}
