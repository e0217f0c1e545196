use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::stats::autocorrelation_matrix_with;
use super::trace::TraceSet;
use crate::error::{Error, Result};
use crate::reduce::Reduction;

/// Zero-padding factor applied before the spectral FWHM measurement.
pub const BANDWIDTH_ZERO_PAD: usize = 16;
/// Relative eigenvalue gap below which the extracted mode is flagged as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-9;

const NORM_TOL: f64 = 1e-10;

/// Discrete temporal mode function with unit Euclidean norm (Σψ_i² = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TemporalModeRecord", into = "TemporalModeRecord")]
pub struct TemporalMode {
    psi: Vec<f64>,
    dt_ns: f64,
    purity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalModeRecord {
    pub dt_ns: f64,
    pub psi: Vec<f64>,
    pub purity: f64,
}

impl From<TemporalMode> for TemporalModeRecord {
    fn from(m: TemporalMode) -> Self {
        TemporalModeRecord {
            dt_ns: m.dt_ns,
            psi: m.psi,
            purity: m.purity,
        }
    }
}

impl TryFrom<TemporalModeRecord> for TemporalMode {
    type Error = Error;

    fn try_from(r: TemporalModeRecord) -> Result<Self> {
        let norm_sq: f64 = r.psi.iter().map(|x| x * x).sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::Format(format!("mode norm² is {norm_sq}, expected 1")));
        }
        TemporalMode::check(&r.psi, r.dt_ns, r.purity)?;
        Ok(TemporalMode {
            psi: r.psi,
            dt_ns: r.dt_ns,
            purity: r.purity,
        })
    }
}

impl TemporalMode {
    /// Normalizes `samples` into a mode of purity 1.
    pub fn from_samples(samples: Vec<f64>, dt_ns: f64) -> Result<Self> {
        Self::with_purity(samples, dt_ns, 1.0)
    }

    pub fn with_purity(mut samples: Vec<f64>, dt_ns: f64, purity: f64) -> Result<Self> {
        let norm = samples.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::input("mode function has zero or non-finite norm"));
        }
        samples.iter_mut().for_each(|x| *x /= norm);
        Self::check(&samples, dt_ns, purity)?;
        Ok(TemporalMode {
            psi: samples,
            dt_ns,
            purity,
        })
    }

    fn check(psi: &[f64], dt_ns: f64, purity: f64) -> Result<()> {
        if psi.is_empty() || psi.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("mode samples must be finite and non-empty"));
        }
        if !(dt_ns > 0.0 && dt_ns.is_finite()) {
            return Err(Error::input(format!("mode sample spacing {dt_ns} must be positive")));
        }
        if !(purity > 0.0 && purity <= 1.0) {
            return Err(Error::input(format!("purity {purity} outside (0, 1]")));
        }
        Ok(())
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn dt_ns(&self) -> f64 {
        self.dt_ns
    }

    pub fn purity(&self) -> f64 {
        self.purity
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// |⟨self, other⟩|
    pub fn overlap(&self, other: &TemporalMode) -> f64 {
        self.psi.iter().zip(&other.psi).map(|(a, b)| a * b).sum::<f64>().abs()
    }
}

/// Mode estimate plus the spectrum it was taken from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedMode {
    pub mode: TemporalMode,
    /// Eigenvalues of the excess autocorrelation, descending.
    pub eigenvalues: Vec<f64>,
    /// Set when the two leading eigenvalues are (numerically) degenerate.
    pub degeneracy_warning: Option<String>,
}

/// Dominant eigenvector of A_heralded − A_background.
pub fn extract_mode(heralded: &TraceSet, background: &TraceSet) -> Result<ExtractedMode> {
    extract_mode_with(heralded, background, Reduction::FixedOrder)
}

pub fn extract_mode_with(heralded: &TraceSet, background: &TraceSet, mode: Reduction) -> Result<ExtractedMode> {
    heralded.ensure_compatible(background)?;
    let a_her = autocorrelation_matrix_with(heralded, mode)?;
    let a_bg = autocorrelation_matrix_with(background, mode)?;
    mode_from_excess(a_her - a_bg, heralded.dt_ns())
}

/// Principal-eigenvector extraction from an excess autocorrelation matrix.
///
/// The sign is fixed so the largest-magnitude sample is positive; purity is
/// λ₁ / Σ_{λ_k > 0} λ_k.
pub fn mode_from_excess(excess: DMatrix<f64>, dt_ns: f64) -> Result<ExtractedMode> {
    let n = excess.nrows();
    if n == 0 || excess.ncols() != n {
        return Err(Error::input("excess autocorrelation must be square and non-empty"));
    }
    let eig = SymmetricEigen::new(excess);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();

    let lead = eigenvalues[0];
    if !(lead > 0.0) {
        return Err(Error::Degenerate(format!(
            "no excess mode: largest eigenvalue of the heralded-minus-background autocorrelation is {lead:.3e}"
        )));
    }
    let positive_sum: f64 = eigenvalues.iter().filter(|&&l| l > 0.0).sum();
    let purity = (lead / positive_sum).min(1.0);

    let mut psi: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let peak = psi
        .iter()
        .enumerate()
        .fold(
            (0, 0.0f64),
            |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) },
        )
        .0;
    if psi[peak] < 0.0 {
        psi.iter_mut().for_each(|x| *x = -*x);
    }

    let degeneracy_warning = match eigenvalues.get(1) {
        Some(&second) if lead - second < DEGENERACY_GAP * lead => {
            let msg = format!("leading eigenvalues nearly degenerate: {lead:.6e} vs {second:.6e}");
            log::warn!("{msg}");
            Some(msg)
        }
        _ => None,
    };

    Ok(ExtractedMode {
        mode: TemporalMode::with_purity(psi, dt_ns, purity)?,
        eigenvalues,
        degeneracy_warning,
    })
}

/// Spectral FWHM of |DFT ψ|² in MHz.
///
/// The mode is zero-padded ×16; the half-maximum crossings on either side of
/// the spectral peak are located by a parabola through the three bins around
/// each crossing.
pub fn mode_bandwidth(mode: &TemporalMode) -> Result<f64> {
    let n_pad = mode.len() * BANDWIDTH_ZERO_PAD;
    let mut buf: Vec<Complex64> = (0..n_pad)
        .map(|i| Complex64::new(if i < mode.len() { mode.psi[i] } else { 0.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n_pad).process(&mut buf);
    // Reorder to ascending frequency: index 0 ↔ bin −n_pad/2 (the Nyquist bin).
    let half = n_pad / 2;
    let power: Vec<f64> = (0..n_pad).map(|i| buf[(i + half) % n_pad].norm_sqr()).collect();

    let peak = power
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0;
    if peak == 0 {
        return Err(Error::Degenerate(
            "mode spectrum peaks at the Nyquist edge (undersampled mode)".into(),
        ));
    }
    let level = 0.5 * power[peak];

    let mut right = peak;
    while right + 1 < n_pad && power[right + 1] > level {
        right += 1;
    }
    let mut left = peak;
    while left > 0 && power[left - 1] > level {
        left -= 1;
    }
    if right + 1 >= n_pad || left == 0 {
        return Err(Error::Degenerate(
            "mode spectrum stays above half maximum up to the Nyquist edge (undersampled mode)".into(),
        ));
    }
    // crossings lie in [right, right+1] and [left−1, left]
    let f_right = crossing(&power, right, level);
    let f_left = crossing(&power, left - 1, level);
    let bin_mhz = 1000.0 / (n_pad as f64 * mode.dt_ns);
    Ok((f_right - f_left) * bin_mhz)
}

/// Fractional bin index in [k, k+1] where the spectrum crosses `level`.
fn crossing(power: &[f64], k: usize, level: f64) -> f64 {
    let linear = k as f64 + (power[k] - level) / (power[k] - power[k + 1]);
    // Parabola through the three bins nearest the crossing.
    let centre = if linear - k as f64 <= 0.5 { k } else { k + 1 };
    if centre == 0 || centre + 1 >= power.len() {
        return linear;
    }
    let (y0, y1, y2) = (power[centre - 1], power[centre], power[centre + 1]);
    let a = 0.5 * (y0 + y2) - y1;
    let b = 0.5 * (y2 - y0);
    let c = y1 - level;
    let roots: Vec<f64> = if a.abs() < 1e-300 {
        if b == 0.0 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            vec![]
        } else {
            let s = disc.sqrt();
            vec![(-b + s) / (2.0 * a), (-b - s) / (2.0 * a)]
        }
    };
    let lo = k as f64 - centre as f64;
    roots
        .into_iter()
        .filter(|t| (lo..=lo + 1.0).contains(t))
        .map(|t| centre as f64 + t)
        .next()
        .unwrap_or(linear)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_mode(n: usize, dt: f64, centre_ns: f64, fwhm_ns: f64) -> TemporalMode {
        let sigma = fwhm_ns / (8.0 * 2f64.ln()).sqrt();
        let psi = (0..n)
            .map(|i| {
                let t = i as f64 * dt - centre_ns;
                (-t * t / (4.0 * sigma * sigma)).exp()
            })
            .collect();
        TemporalMode::from_samples(psi, dt).unwrap()
    }

    #[test]
    fn rank_one_excess_recovers_vector_exactly() {
        let v: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.7).sin() + 0.1).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let excess = DMatrix::from_fn(12, 12, |i, j| 0.8 * v[i] * v[j]);
        let out = mode_from_excess(excess, 1.0).unwrap();
        let ov: f64 = out.mode.psi().iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((ov.abs() - 1.0).abs() < 1e-12);
        assert!((out.mode.purity() - 1.0).abs() < 1e-9);
        assert!((out.eigenvalues[0] - 0.8).abs() < 1e-12);
        // canonical sign: the largest |ψ_i| is positive
        let peak = out
            .mode
            .psi()
            .iter()
            .cloned()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(peak > 0.0);
    }

    #[test]
    fn second_excess_mode_lowers_purity() {
        let n = 10;
        let e = |k: usize| (0..n).map(move |i| if i == k { 1.0 } else { 0.0 });
        let u: Vec<f64> = e(3).collect();
        let w: Vec<f64> = e(6).collect();
        let excess = DMatrix::from_fn(n, n, |i, j| 0.8 * u[i] * u[j] + 0.2 * w[i] * w[j]);
        let out = mode_from_excess(excess, 1.0).unwrap();
        assert!((out.mode.purity() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn negative_excess_is_no_mode() {
        let excess = DMatrix::from_diagonal_element(8, 8, -0.1);
        assert!(matches!(mode_from_excess(excess, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn degenerate_leading_pair_is_flagged() {
        let excess = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.5, 0.1, 0.0]));
        let out = mode_from_excess(excess, 1.0).unwrap();
        assert!(out.degeneracy_warning.is_some());
    }

    #[test]
    fn gaussian_time_bandwidth_product() {
        // Intensity FWHM Δt ⇒ spectral power FWHM (2 ln 2 / π) / Δt.
        for &fwhm in &[8.0, 11.3, 20.0] {
            let mode = gaussian_mode(180, 1.0, 90.0, fwhm);
            let got = mode_bandwidth(&mode).unwrap();
            let want = 2.0 * 2f64.ln() / std::f64::consts::PI / fwhm * 1000.0;
            assert!((got / want - 1.0).abs() < 0.02, "Δt={fwhm}: {got} vs {want}");
        }
    }

    #[test]
    fn doubling_dt_halves_bandwidth_exactly() {
        let a = gaussian_mode(64, 1.0, 32.0, 9.0);
        let b = TemporalMode::from_samples(a.psi().to_vec(), 2.0).unwrap();
        assert_eq!(mode_bandwidth(&b).unwrap(), 0.5 * mode_bandwidth(&a).unwrap());
    }

    #[test]
    fn alternating_mode_is_undersampled() {
        let psi: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mode = TemporalMode::from_samples(psi, 1.0).unwrap();
        assert!(matches!(mode_bandwidth(&mode), Err(Error::Degenerate(_))));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mode = gaussian_mode(20, 1.0, 10.0, 4.0);
        let text = serde_json::to_string(&mode).unwrap();
        let back: TemporalMode = serde_json::from_str(&text).unwrap();
        assert_eq!(back, mode);
        assert!(serde_json::from_str::<TemporalMode>(r#"{"dt_ns":1.0,"psi":[1.0,1.0],"purity":1.0}"#).is_err());
        assert!(serde_json::from_str::<TemporalMode>(r#"{"dt_ns":1.0,"psi":[1.0],"purity":0.0}"#).is_err());
    }
}
