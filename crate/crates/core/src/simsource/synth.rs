use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::SourceParams;
use super::sampler::QuadratureSampler;
use super::state::{background_state, heralded_state};
use crate::error::{Error, Result};
use crate::fock::{photon_statistics, DensityMatrix};
use crate::tmode::{TemporalMode, TraceMeta, TraceSet};

/// Above this many samples per trace the orthogonal complement of ψ is
/// sampled by projection instead of through an explicit basis.
pub const EXPLICIT_BASIS_MAX: usize = 1024;
const GS_DROP_TOL: f64 = 1e-8;

const STREAM_HERALDED: u64 = 1;
const STREAM_BACKGROUND: u64 = 2;
const STREAM_VACUUM: u64 = 3;

/// Exact states and mode used to generate a data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub heralded_state: crate::fock::DensityMatrix,
    pub background_state: crate::fock::DensityMatrix,
    pub mode: TemporalMode,
    /// Herald rate carried over from the parameters (Hz); not used in the state model.
    pub herald_rate_hint: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub heralded: TraceSet,
    pub background: TraceSet,
    /// Local-oscillator phase of each heralded trace, in [0, 2π).
    pub heralded_phases: Vec<f64>,
    pub truth: GroundTruth,
}

/// Orthonormal basis of ℝⁿ as columns, the first being ψ.
///
/// Completed by Gram–Schmidt over the canonical vectors e₀, e₁, …; a
/// candidate whose residual vanishes is skipped and the next one is tried.
pub fn mode_basis(psi: &[f64]) -> Result<DMatrix<f64>> {
    let cols = basis_columns(psi)?;
    Ok(DMatrix::from_fn(psi.len(), psi.len(), |i, k| cols[k][i]))
}

fn basis_columns(psi: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = psi.len();
    let norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::input("mode function has zero or non-finite norm"));
    }
    let mut cols: Vec<Vec<f64>> = vec![psi.iter().map(|x| x / norm).collect()];
    for seed in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[seed] = 1.0;
        // two passes of modified Gram–Schmidt keep the basis orthogonal to rounding
        for _ in 0..2 {
            for c in &cols {
                let proj: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > GS_DROP_TOL {
            v.iter_mut().for_each(|x| *x /= r);
            cols.push(v);
        }
    }
    debug_assert_eq!(cols.len(), n);
    Ok(cols)
}

/// Builds one trace from the mode quadrature and isotropic draws for the rest.
struct TraceBuilder<'a> {
    psi: &'a [f64],
    basis: Option<Vec<Vec<f64>>>,
    other_sd: f64,
    noise_sd: f64,
}

impl TraceBuilder<'_> {
    fn fill<R: Rng>(&self, q_mode: f64, rng: &mut R, out: &mut [f64]) {
        let n = out.len();
        match &self.basis {
            Some(cols) => {
                out.iter_mut().zip(&cols[0]).for_each(|(o, p)| *o = q_mode * p);
                for col in &cols[1..] {
                    let q: f64 = self.other_sd * rng.sample::<f64, _>(StandardNormal);
                    out.iter_mut().zip(col).for_each(|(o, p)| *o += q * p);
                }
            }
            None => {
                // g − ψ(ψ·g) has the same law as Σ_{k≥1} Q_k φ_k
                for o in out.iter_mut() {
                    *o = self.other_sd * rng.sample::<f64, _>(StandardNormal);
                }
                let along: f64 = out.iter().zip(self.psi).map(|(a, b)| a * b).sum();
                out.iter_mut()
                    .zip(self.psi)
                    .for_each(|(o, p)| *o += (q_mode - along) * p);
            }
        }
        if self.noise_sd > 0.0 {
            for o in out.iter_mut().take(n) {
                *o += self.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
}

fn event_rng(seed: u64, kind: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 48) | index as u64);
    rng
}

/// Thermal quadrature variance ½ + n̄; the marginal is exactly Gaussian.
fn thermal_sd(state: &DensityMatrix) -> f64 {
    (0.5 + photon_statistics(state).mean_n).sqrt()
}

fn builder<'a>(params: &SourceParams, psi: &'a [f64], other_sd: f64) -> Result<TraceBuilder<'a>> {
    let basis = if psi.len() <= EXPLICIT_BASIS_MAX {
        Some(basis_columns(psi)?)
    } else {
        None
    };
    Ok(TraceBuilder {
        psi,
        basis,
        other_sd,
        noise_sd: params.trace.electronic_noise_var.sqrt(),
    })
}

fn empty_set(params: &SourceParams, n_traces: usize, label: &str, seed: u64) -> Result<(TraceSet, Vec<f64>)> {
    let t = &params.trace;
    let meta = TraceMeta {
        label: label.to_string(),
        seed: Some(seed),
        notes: String::new(),
    };
    let set = TraceSet::from_rows(t.n_samples, t.dt_ns, t.trigger_index, Vec::new())?.with_meta(meta);
    Ok((set, vec![0.0; n_traces * t.n_samples]))
}

/// Synthesizes heralded and background homodyne traces.
///
/// Heralded events draw the mode quadrature from the heralded state at a
/// uniform random phase and every orthogonal mode from the background
/// state. Each event has its own ChaCha8 stream keyed by (seed, kind, index),
/// so the output does not depend on thread count or scheduling.
pub fn synthesize_traces(
    params: &SourceParams,
    n_heralds: usize,
    n_background: usize,
    seed: u64,
) -> Result<SyntheticData> {
    params.validate()?;
    let mode = params.mode()?;
    let rho_h = heralded_state(params)?;
    let rho_bg = background_state(params)?;
    // the heralded state is diagonal, so one table serves every phase
    let sampler = QuadratureSampler::new(&rho_h, 0.0)?;
    let bg_sd = thermal_sd(&rho_bg);
    let build = builder(params, mode.psi(), bg_sd)?;
    let n = params.trace.n_samples;

    let (heralded, mut data) = empty_set(params, n_heralds, "heralded", seed)?;
    let mut phases = vec![0.0; n_heralds];
    data.par_chunks_mut(n)
        .zip(phases.par_iter_mut())
        .enumerate()
        .for_each(|(i, (row, phase))| {
            let mut rng = event_rng(seed, STREAM_HERALDED, i);
            *phase = rng.random::<f64>() * TAU;
            let q = sampler.sample(&mut rng);
            build.fill(q, &mut rng, row);
        });
    let heralded = TraceSet::from_rows(n, heralded.dt_ns(), heralded.trigger_index(), data)?.with_meta(heralded.meta);

    let (background, mut data) = empty_set(params, n_background, "background", seed)?;
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = event_rng(seed, STREAM_BACKGROUND, i);
        let q = bg_sd * rng.sample::<f64, _>(StandardNormal);
        build.fill(q, &mut rng, row);
    });
    let background =
        TraceSet::from_rows(n, background.dt_ns(), background.trigger_index(), data)?.with_meta(background.meta);

    Ok(SyntheticData {
        heralded,
        background,
        heralded_phases: phases,
        truth: GroundTruth {
            heralded_state: rho_h,
            background_state: rho_bg,
            mode,
            herald_rate_hint: params.herald_rate_hz,
        },
    })
}

/// Vacuum (blocked-signal) traces for calibration: every mode in |0⟩ plus electronic noise.
pub fn synthesize_vacuum(params: &SourceParams, n_traces: usize, seed: u64) -> Result<TraceSet> {
    params.validate_trace()?;
    let mode = params.mode()?;
    let vac_sd = 0.5f64.sqrt();
    let build = builder(params, mode.psi(), vac_sd)?;
    let n = params.trace.n_samples;
    let (set, mut data) = empty_set(params, n_traces, "vacuum", seed)?;
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = event_rng(seed, STREAM_VACUUM, i);
        let q = vac_sd * rng.sample::<f64, _>(StandardNormal);
        build.fill(q, &mut rng, row);
    });
    Ok(TraceSet::from_rows(n, set.dt_ns(), set.trigger_index(), data)?.with_meta(set.meta))
}
