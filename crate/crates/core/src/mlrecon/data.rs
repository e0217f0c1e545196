use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{bin_integral, hermite_fns_into, MeasurementOperator, QuadratureSample};
use crate::reduce::CHUNK_LEN;

/// Histogram layout for binned likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binning {
    pub q_min: f64,
    pub q_max: f64,
    pub n_bins: usize,
    #[serde(default = "one")]
    pub n_phase_bins: usize,
}

fn one() -> usize {
    1
}

impl Binning {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_min < self.q_max && self.q_min.is_finite() && self.q_max.is_finite()) {
            return Err(Error::input(format!(
                "binning range [{}, {}] is empty",
                self.q_min, self.q_max
            )));
        }
        if self.n_bins < 8 {
            return Err(Error::input(format!(
                "need at least 8 quadrature bins, got {}",
                self.n_bins
            )));
        }
        if self.n_phase_bins == 0 {
            return Err(Error::input("need at least one phase bin"));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_bins as f64
    }
}

/// Observed events and their relative frequencies f_j (Σ f_j = 1).
///
/// Unbinned samples are stored as real embeddings x = [Re v; Im v] of the
/// projector vectors v_m = e^{imθ}ψ_m(q), in column blocks of
/// [`CHUNK_LEN`] events so that each reduction chunk is one dense block.
#[derive(Debug, Clone)]
pub struct LikelihoodData {
    pub(crate) cutoff: usize,
    pub(crate) kind: DataKind,
    pub(crate) freqs: Vec<f64>,
    /// Subtracted from binned log-likelihoods so they approximate the
    /// unbinned density likelihood: ln Δq.
    pub(crate) ln_bin_width: f64,
    pub(crate) dropped: usize,
    /// Number of raw samples behind the frequencies; 0 when unknown.
    pub(crate) n_obs: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum DataKind {
    /// 2(cutoff+1) × len blocks, column j = x_j.
    Samples(Arc<Vec<DMatrix<f64>>>),
    Operators(Arc<Vec<DMatrix<Complex64>>>),
}

impl LikelihoodData {
    /// One rank-one projector per sample, each with frequency 1/N.
    pub fn from_samples(samples: &[QuadratureSample], cutoff: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("no quadrature samples"));
        }
        let d = cutoff + 1;
        let mut psi = vec![0.0; d];
        let mut blocks = Vec::with_capacity(samples.len().div_ceil(CHUNK_LEN));
        for (c, chunk) in samples.chunks(CHUNK_LEN).enumerate() {
            let mut block = DMatrix::<f64>::zeros(2 * d, chunk.len());
            for (j, s) in chunk.iter().enumerate() {
                hermite_fns_into(s.value, &mut psi).map_err(|e| Error::AtTrace {
                    index: c * CHUNK_LEN + j,
                    source: Box::new(e),
                })?;
                for (m, &p) in psi.iter().enumerate() {
                    let (sin, cos) = (m as f64 * s.phase).sin_cos();
                    block[(m, j)] = cos * p;
                    block[(d + m, j)] = sin * p;
                }
            }
            blocks.push(block);
        }
        let n = samples.len();
        Ok(LikelihoodData {
            cutoff,
            kind: DataKind::Samples(Arc::new(blocks)),
            freqs: vec![1.0 / n as f64; n],
            ln_bin_width: 0.0,
            dropped: 0,
            n_obs: n,
        })
    }

    /// Histogram of the samples on a (q, θ) grid; each occupied cell becomes the
    /// bin-integrated, phase-averaged POVM element. Samples outside
    /// [q_min, q_max) are dropped and counted in [`Self::dropped`].
    pub fn binned(samples: &[QuadratureSample], cutoff: usize, binning: &Binning) -> Result<Self> {
        binning.validate()?;
        let dq = binning.bin_width();
        let dphi = TAU / binning.n_phase_bins as f64;
        let mut counts = vec![0usize; binning.n_bins * binning.n_phase_bins];
        let mut dropped = 0;
        for s in samples {
            let k = ((s.value - binning.q_min) / dq).floor();
            if !(k >= 0.0 && (k as usize) < binning.n_bins) {
                dropped += 1;
                continue;
            }
            let ph = ((s.phase / dphi).floor() as usize).min(binning.n_phase_bins - 1);
            counts[ph * binning.n_bins + k as usize] += 1;
        }
        let kept = samples.len() - dropped;
        if kept == 0 {
            return Err(Error::input("no samples fall inside the binning range"));
        }
        let mut ops = Vec::new();
        let mut freqs = Vec::new();
        for (cell, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let (ph, k) = (cell / binning.n_bins, cell % binning.n_bins);
            let lo = binning.q_min + k as f64 * dq;
            let op = bin_integral(lo, lo + dq, (ph as f64 + 0.5) * dphi, cutoff)?.phase_averaged(dphi);
            ops.push(op.matrix().clone());
            freqs.push(count as f64 / kept as f64);
        }
        if dropped > 0 {
            log::warn!(
                "{dropped} samples outside [{}, {}) were dropped",
                binning.q_min,
                binning.q_max
            );
        }
        Ok(LikelihoodData {
            cutoff,
            kind: DataKind::Operators(Arc::new(ops)),
            freqs,
            ln_bin_width: dq.ln(),
            dropped,
            n_obs: kept,
        })
    }

    /// Arbitrary POVM elements with observed frequencies (normalized to unit sum).
    pub fn from_operators(ops: Vec<MeasurementOperator>, freqs: Vec<f64>) -> Result<Self> {
        if ops.is_empty() || ops.len() != freqs.len() {
            return Err(Error::input("need one frequency per operator"));
        }
        let cutoff = ops[0].cutoff();
        if ops.iter().any(|o| o.cutoff() != cutoff) {
            return Err(Error::input("operators must share one cutoff"));
        }
        if freqs.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::input("frequencies must be finite and non-negative"));
        }
        let total: f64 = freqs.iter().sum();
        if total <= 0.0 {
            return Err(Error::input("frequencies sum to zero"));
        }
        Ok(LikelihoodData {
            cutoff,
            kind: DataKind::Operators(Arc::new(ops.into_iter().map(|o| o.matrix().clone()).collect())),
            freqs: freqs.into_iter().map(|f| f / total).collect(),
            ln_bin_width: 0.0,
            dropped: 0,
            n_obs: 0,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of distinct events (samples or occupied bins).
    pub fn n_events(&self) -> usize {
        self.freqs.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    /// Raw samples behind the frequencies (0 for operator data).
    pub fn n_observations(&self) -> usize {
        self.n_obs
    }

    /// Samples discarded by binning.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn is_binned(&self) -> bool {
        matches!(self.kind, DataKind::Operators(_))
    }

    /// Nonparametric bootstrap replica: the same events reweighted by
    /// multinomial resampling of the original frequencies.
    pub fn resampled<R: Rng + ?Sized>(&self, n_draws: usize, rng: &mut R) -> Self {
        let mut cdf = Vec::with_capacity(self.freqs.len());
        let mut acc = 0.0;
        for f in &self.freqs {
            acc += f;
            cdf.push(acc);
        }
        let mut counts = vec![0u32; self.freqs.len()];
        for _ in 0..n_draws {
            let u = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(counts.len() - 1);
            counts[k] += 1;
        }
        let inv = 1.0 / n_draws as f64;
        LikelihoodData {
            freqs: counts.into_iter().map(|c| c as f64 * inv).collect(),
            ..self.clone()
        }
    }
}
