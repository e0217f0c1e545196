//! Quadrature extraction: projects each trace onto the temporal mode and
//! rescales so that vacuum has variance 1/2.
//!
//! The mode has unit Euclidean norm, so projection is a plain inner product
//! Σ_i q_i ψ_i that does not depend on the sample spacing. All unit handling
//! lives in [`CalibrationScale`].

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::QuadratureSample;
use crate::tmode::{TemporalMode, TraceSet, TraceView};

pub const MIN_VACUUM_TRACES: usize = 100;
/// Relative excess of the raw vacuum variance over 1/2 that triggers the noise flag.
pub const NOISE_FLAG_RATIO: f64 = 0.5;
const DT_MATCH_TOL: f64 = 1e-9;
pub const QUADRATURE_CSV_HEADER: [&str; 2] = ["theta_rad", "value"];

/// Multiplier taking raw projections to vacuum-variance-1/2 units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationScale {
    pub scale: f64,
    pub vacuum_var_raw: f64,
    pub n_vacuum_traces: usize,
}

impl CalibrationScale {
    /// Scale 1: raw projections are taken as already calibrated.
    pub fn unit() -> Self {
        CalibrationScale {
            scale: 1.0,
            vacuum_var_raw: 0.5,
            n_vacuum_traces: 0,
        }
    }

    /// True when raw vacuum noise exceeds shot noise by more than
    /// [`NOISE_FLAG_RATIO`]. Meaningful only if the raw traces are already
    /// in shot-noise units, as the simulator produces them.
    pub fn excess_noise_flag(&self) -> bool {
        (self.vacuum_var_raw - 0.5) / 0.5 > NOISE_FLAG_RATIO
    }
}

fn check_geometry(n_samples: usize, dt_ns: f64, mode: &TemporalMode) -> Result<()> {
    if n_samples != mode.len() {
        return Err(Error::input(format!(
            "trace has {n_samples} samples but the mode has {}",
            mode.len()
        )));
    }
    if ((dt_ns - mode.dt_ns()) / mode.dt_ns()).abs() > DT_MATCH_TOL {
        return Err(Error::input(format!(
            "trace spacing {dt_ns} ns differs from mode spacing {} ns",
            mode.dt_ns()
        )));
    }
    Ok(())
}

fn inner(samples: &[f64], psi: &[f64]) -> f64 {
    samples.iter().zip(psi).map(|(a, b)| a * b).sum()
}

/// Q_θ = scale · Σ_i q_i ψ_i.
pub fn project_trace(
    trace: TraceView<'_>,
    mode: &TemporalMode,
    cal: &CalibrationScale,
    theta: f64,
) -> Result<QuadratureSample> {
    check_geometry(trace.samples.len(), trace.dt_ns, mode)?;
    QuadratureSample::new(cal.scale * inner(trace.samples, mode.psi()), theta)
}

/// Uncalibrated projections of every trace, in order.
pub fn project_raw(set: &TraceSet, mode: &TemporalMode) -> Result<Vec<f64>> {
    check_geometry(set.n_samples(), set.dt_ns(), mode)?;
    let psi = mode.psi();
    Ok(set
        .data()
        .par_chunks(set.n_samples())
        .map(|row| inner(row, psi))
        .collect())
}

/// Sets the scale so that the projected vacuum variance becomes 1/2.
pub fn calibrate_vacuum(vacuum: &TraceSet, mode: &TemporalMode) -> Result<CalibrationScale> {
    if vacuum.len() < MIN_VACUUM_TRACES {
        return Err(Error::input(format!(
            "vacuum calibration needs at least {MIN_VACUUM_TRACES} traces, got {}",
            vacuum.len()
        )));
    }
    let raw = project_raw(vacuum, mode)?;
    let (mean, var) = mean_variance(&raw);
    let var = var.unwrap_or(0.0);
    // rounding leaves ~ε² residue on constant projections
    if var <= 1e-24 * (1.0 + mean.unwrap_or(0.0).powi(2)) {
        return Err(Error::Degenerate(
            "vacuum traces have zero variance (dead detector?)".into(),
        ));
    }
    let cal = CalibrationScale {
        scale: (0.5 / var).sqrt(),
        vacuum_var_raw: var,
        n_vacuum_traces: vacuum.len(),
    };
    if cal.excess_noise_flag() {
        log::warn!(
            "raw vacuum variance {var:.4} exceeds shot noise by more than {:.0}%",
            100.0 * NOISE_FLAG_RATIO
        );
    }
    Ok(cal)
}

/// Local-oscillator phase assignment for a data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseTags {
    /// Logged phase of every trace, in radians.
    PerTrace(Vec<f64>),
    /// Phase-randomized acquisition: θ drawn uniformly per trace.
    RandomUniform { seed: u64 },
}

/// Quadrature samples in trace order with their summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDataset {
    pub samples: Vec<QuadratureSample>,
    /// `None` for an empty data set.
    pub mean: Option<f64>,
    /// Unbiased sample variance; `None` below two samples.
    pub variance: Option<f64>,
}

impl QuadratureDataset {
    pub fn from_samples(samples: Vec<QuadratureSample>) -> Self {
        let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
        let (mean, variance) = mean_variance(&values);
        QuadratureDataset {
            samples,
            mean,
            variance,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(QUADRATURE_CSV_HEADER)?;
        for s in &self.samples {
            out.write_record([format!("{:?}", s.phase), format!("{:?}", s.value)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.iter().map(str::trim).ne(QUADRATURE_CSV_HEADER) {
            return Err(Error::Format(format!(
                "expected header 'theta_rad,value', found '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Format(format!("row {}: column {k} is not a number", i + 1)))
            };
            let sample = QuadratureSample::new(parse(1)?, parse(0)?).map_err(|e| Error::AtTrace {
                index: i,
                source: Box::new(e),
            })?;
            samples.push(sample);
        }
        Ok(Self::from_samples(samples))
    }
}

fn mean_variance(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var))
}

/// Projects every trace and attaches phases, preserving trace order.
pub fn extract_dataset(
    set: &TraceSet,
    mode: &TemporalMode,
    cal: &CalibrationScale,
    phases: &PhaseTags,
) -> Result<QuadratureDataset> {
    let thetas: Vec<f64> = match phases {
        PhaseTags::PerTrace(v) => {
            if v.len() != set.len() {
                return Err(Error::input(format!("{} phase tags for {} traces", v.len(), set.len())));
            }
            v.clone()
        }
        PhaseTags::RandomUniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..set.len())
                .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                .collect()
        }
    };
    let raw = project_raw(set, mode)?;
    let samples = raw
        .into_iter()
        .zip(thetas)
        .enumerate()
        .map(|(i, (q, theta))| {
            QuadratureSample::new(cal.scale * q, theta).map_err(|e| Error::AtTrace {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuadratureDataset::from_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simsource::{synthesize_vacuum, SourceParams};
    use crate::tmode::Trace;
    use rand_distr::StandardNormal;

    fn mode16() -> TemporalMode {
        let psi: Vec<f64> = (0..16).map(|i| (-((i as f64 - 8.0) / 2.5).powi(2)).exp()).collect();
        TemporalMode::from_samples(psi, 1.0).unwrap()
    }

    fn white(n_traces: usize, var: f64, seed: u64) -> TraceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n_traces * 16)
            .map(|_| var.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        TraceSet::from_rows(16, 1.0, 0, data).unwrap()
    }

    #[test]
    fn projection_of_mode_and_orthogonal_trace() {
        let mode = mode16();
        let t = Trace::new(mode.psi().iter().map(|x| 2.5 * x).collect(), 1.0, 0).unwrap();
        let q = project_trace(t.view(), &mode, &CalibrationScale::unit(), 7.0).unwrap();
        assert!((q.value - 2.5).abs() < 1e-14);
        assert!((q.phase - (7.0 - std::f64::consts::TAU)).abs() < 1e-14);
        let mut orth: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let along = inner(&orth, mode.psi());
        orth.iter_mut().zip(mode.psi()).for_each(|(o, p)| *o -= along * p);
        let t = Trace::new(orth, 1.0, 0).unwrap();
        let q = project_trace(t.view(), &mode, &CalibrationScale::unit(), 0.0).unwrap();
        assert!(q.value.abs() < 1e-14);
    }

    #[test]
    fn geometry_mismatch() {
        let mode = mode16();
        let t = Trace::new(vec![0.0; 17], 1.0, 0).unwrap();
        assert!(matches!(
            project_trace(t.view(), &mode, &CalibrationScale::unit(), 0.0),
            Err(Error::Input(_))
        ));
        let t = Trace::new(vec![0.0; 16], 2.0, 0).unwrap();
        assert!(matches!(
            project_trace(t.view(), &mode, &CalibrationScale::unit(), 0.0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn calibration_from_raw_variance() {
        let mode = mode16();
        let cal = calibrate_vacuum(&white(50_000, 2.0, 1), &mode).unwrap();
        assert!((cal.scale - 0.5).abs() < 0.005, "{}", cal.scale);
        let doubled = calibrate_vacuum(&white(50_000, 2.0, 1).scaled(2.0), &mode).unwrap();
        assert!((doubled.scale - cal.scale / 2.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_closure_and_idempotence() {
        let mode = mode16();
        let vac = white(20_000, 3.0, 2);
        let cal = calibrate_vacuum(&vac, &mode).unwrap();
        let again = calibrate_vacuum(&vac.scaled(cal.scale), &mode).unwrap();
        assert!((again.scale - 1.0).abs() < 0.02);
        let fresh = white(20_000, 3.0, 3);
        let d = extract_dataset(&fresh, &mode, &cal, &PhaseTags::RandomUniform { seed: 1 }).unwrap();
        let sigma = 0.5 * (2.0 / 20_000f64).sqrt();
        // two independent variance estimates enter: allow 3σ of their difference
        assert!((d.variance.unwrap() - 0.5).abs() < 3.0 * sigma * 2f64.sqrt());
    }

    #[test]
    fn calibration_needs_vacuum_signal() {
        let mode = mode16();
        assert!(matches!(
            calibrate_vacuum(&white(50, 1.0, 1), &mode),
            Err(Error::Input(_))
        ));
        let dead = TraceSet::from_rows(16, 1.0, 0, vec![0.25; 16 * 200]).unwrap();
        assert!(matches!(calibrate_vacuum(&dead, &mode), Err(Error::Degenerate(_))));
    }

    #[test]
    fn electronic_noise_budget() {
        let mut p = SourceParams::paper_scale();
        for (noise, flagged) in [(0.1, false), (0.4, true)] {
            p.trace.electronic_noise_var = noise;
            let mode = p.mode().unwrap();
            let vac = synthesize_vacuum(&p, 40_000, 5).unwrap();
            let cal = calibrate_vacuum(&vac, &mode).unwrap();
            let want = 0.5 + noise;
            assert!((cal.vacuum_var_raw - want).abs() < 4.0 * want * (2.0 / 40_000f64).sqrt());
            assert_eq!(cal.excess_noise_flag(), flagged);
        }
    }

    #[test]
    fn empty_set_gives_empty_dataset() {
        let set = TraceSet::new(16, 1.0, 0).unwrap();
        let d = extract_dataset(
            &set,
            &mode16(),
            &CalibrationScale::unit(),
            &PhaseTags::RandomUniform { seed: 0 },
        )
        .unwrap();
        assert!(d.is_empty() && d.mean.is_none() && d.variance.is_none());
    }

    #[test]
    fn phase_tags_are_checked() {
        let set = white(3, 1.0, 0);
        let cal = CalibrationScale::unit();
        assert!(extract_dataset(&set, &mode16(), &cal, &PhaseTags::PerTrace(vec![0.0; 2])).is_err());
        let err = extract_dataset(&set, &mode16(), &cal, &PhaseTags::PerTrace(vec![0.0, f64::NAN, 0.0])).unwrap_err();
        assert!(matches!(err, Error::AtTrace { index: 1, .. }));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let set = white(50, 1.0, 4);
        let d = extract_dataset(
            &set,
            &mode16(),
            &CalibrationScale::unit(),
            &PhaseTags::RandomUniform { seed: 3 },
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"theta_rad,value\n"));
        let back = QuadratureDataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back, d);
        assert!(QuadratureDataset::read_csv(&b"a,b\n1,2\n"[..]).is_err());
        assert!(QuadratureDataset::read_csv(&b"theta_rad,value\n1,x\n"[..]).is_err());
    }

    #[test]
    fn projection_ignores_sample_spacing() {
        let psi = mode16().psi().to_vec();
        let a = TemporalMode::from_samples(psi.clone(), 1.0).unwrap();
        let b = TemporalMode::from_samples(psi, 10.0).unwrap();
        let row: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).cos()).collect();
        let ta = Trace::new(row.clone(), 1.0, 0).unwrap();
        let tb = Trace::new(row, 10.0, 0).unwrap();
        let cal = CalibrationScale::unit();
        assert_eq!(
            project_trace(ta.view(), &a, &cal, 0.0).unwrap().value,
            project_trace(tb.view(), &b, &cal, 0.0).unwrap().value
        );
    }
}
