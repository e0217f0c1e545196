use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use herald_core::fock::{hermite_fns, wigner, DensityMatrix};
use herald_core::merit::{g2_zero, merit_report, MeritInputs, MeritReport};
use herald_core::mlrecon::{reconstruct, ReconstructionConfig, ReconstructionResult};
use herald_core::quad::{calibrate_vacuum, extract_dataset, CalibrationScale, PhaseTags, QuadratureDataset};
use herald_core::reduce::Reduction;
use herald_core::simsource::{synthesize_traces, synthesize_vacuum, GroundTruth};
use herald_core::tmode::{
    autocorrelation_matrix_with, mode_bandwidth, mode_from_excess, variance_profile_with, TemporalMode, TraceSet,
};
use herald_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::{input, ModeExtraction, PhaseChoice, PipelineConfig, ReportConfig};
use crate::output::{read_indexed, read_json, write_indexed, write_json, write_rows};

pub const HERALDED_TRACES: &str = "heralded.htrc";
pub const BACKGROUND_TRACES: &str = "background.htrc";
pub const VACUUM_TRACES: &str = "vacuum.htrc";
pub const TRUTH_FILE: &str = "truth.json";
pub const PHASES_FILE: &str = "heralded_phases.csv";
pub const MODE_FILE: &str = "mode.json";
pub const MODE_SUMMARY_FILE: &str = "mode_summary.json";
pub const QUADRATURES_FILE: &str = "quadratures.csv";
pub const BACKGROUND_QUADRATURES_FILE: &str = "background_quadratures.csv";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(Error::from)
        .with_context(|| format!("creating {}", dir.display()))
}

fn load_traces(path: &Path) -> anyhow::Result<TraceSet> {
    TraceSet::load_htrc(path).with_context(|| format!("loading traces {}", path.display()))
}

pub fn load_mode(path: &Path) -> anyhow::Result<TemporalMode> {
    read_json(path)
}

/// Writes heralded, background and vacuum traces, the logged heralded
/// phases and the ground truth.
pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<GroundTruth> {
    cfg.validate()?;
    ensure_dir(out)?;
    let a = &cfg.acquisition;
    let data = synthesize_traces(&cfg.source, a.n_heralds, a.n_background, a.seed)?;
    let vacuum = synthesize_vacuum(&cfg.source, a.n_vacuum, a.seed)?;
    data.heralded.save_htrc(out.join(HERALDED_TRACES))?;
    data.background.save_htrc(out.join(BACKGROUND_TRACES))?;
    vacuum.save_htrc(out.join(VACUUM_TRACES))?;
    write_indexed(&out.join(PHASES_FILE), "theta_rad", &data.heralded_phases)?;
    write_json(&out.join(TRUTH_FILE), &data.truth)?;
    Ok(data.truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub purity: f64,
    pub bandwidth_mhz: Option<f64>,
    pub n_samples: usize,
    pub dt_ns: f64,
    /// Excess-autocorrelation eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Extracts the temporal mode and writes plot-ready profiles.
///
/// `autocorrelation.csv` holds the excess autocorrelation flattened row-major:
/// index k is element (k / n, k % n).
pub fn cmd_mode(
    heralded: &Path,
    background: &Path,
    opts: &ModeExtraction,
    reduction: Reduction,
    out: &Path,
) -> anyhow::Result<(TemporalMode, ModeSummary)> {
    ensure_dir(out)?;
    let her = load_traces(heralded)?;
    let bg = load_traces(background)?;
    her.ensure_compatible(&bg)?;
    let excess = autocorrelation_matrix_with(&her, reduction)? - autocorrelation_matrix_with(&bg, reduction)?;
    let flat: Vec<f64> = excess.transpose().iter().copied().collect();
    let extracted = mode_from_excess(excess, her.dt_ns()).context("mode extraction failed")?;
    let mode = extracted.mode;

    let mut warnings: Vec<String> = extracted.degeneracy_warning.into_iter().collect();
    if mode.purity() < opts.min_purity {
        let msg = format!("mode purity {:.4} is below {}", mode.purity(), opts.min_purity);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let bandwidth_mhz = match mode_bandwidth(&mode) {
        Ok(b) => Some(b),
        Err(e) => {
            warnings.push(format!("bandwidth unavailable: {e}"));
            None
        }
    };

    write_json(&out.join(MODE_FILE), &mode)?;
    write_indexed(&out.join("mode_profile.csv"), "psi", mode.psi())?;
    write_indexed(
        &out.join("variance_profile.csv"),
        "variance",
        &variance_profile_with(&her, reduction)?,
    )?;
    write_indexed(
        &out.join("background_variance.csv"),
        "variance",
        &variance_profile_with(&bg, reduction)?,
    )?;
    write_indexed(&out.join("autocorrelation.csv"), "excess", &flat)?;
    write_indexed(&out.join("eigenvalues.csv"), "eigenvalue", &extracted.eigenvalues)?;
    let summary = ModeSummary {
        purity: mode.purity(),
        bandwidth_mhz,
        n_samples: mode.len(),
        dt_ns: mode.dt_ns(),
        eigenvalues: extracted.eigenvalues,
        warnings,
    };
    write_json(&out.join(MODE_SUMMARY_FILE), &summary)?;
    Ok((mode, summary))
}

#[derive(Debug, Clone)]
pub enum PhaseInput {
    /// `index,theta_rad` CSV with one row per trace.
    File(PathBuf),
    RandomUniform(u64),
}

/// Written next to the quadrature CSV as `<stem>.calibration.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub calibration: CalibrationScale,
    pub excess_noise_flag: bool,
    pub n_samples: usize,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Standard error of the variance for Gaussian data, var·√(2/(N−1)).
    pub variance_std_error: Option<f64>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("calibration.json")
}

/// Calibrates against vacuum traces and writes `theta_rad,value` quadratures.
pub fn cmd_extract(
    traces: &Path,
    mode: &Path,
    vacuum: &Path,
    phases: &PhaseInput,
    out_csv: &Path,
) -> anyhow::Result<(QuadratureDataset, ExtractSummary)> {
    let set = load_traces(traces)?;
    let mode = load_mode(mode)?;
    let vac = load_traces(vacuum)?;
    if !set.is_empty() && set.n_samples() != mode.len() {
        // the first trace is where projection would fail
        return Err(Error::AtTrace {
            index: 0,
            source: Box::new(input(format!(
                "trace has {} samples but the mode has {}",
                set.n_samples(),
                mode.len()
            ))),
        }
        .into());
    }
    let cal = calibrate_vacuum(&vac, &mode).context("vacuum calibration failed")?;
    let tags = match phases {
        PhaseInput::File(p) => PhaseTags::PerTrace(read_indexed(p)?),
        PhaseInput::RandomUniform(seed) => PhaseTags::RandomUniform { seed: *seed },
    };
    let ds = extract_dataset(&set, &mode, &cal, &tags)?;
    if let Some(dir) = out_csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let file = File::create(out_csv)
        .map_err(Error::from)
        .with_context(|| format!("writing {}", out_csv.display()))?;
    ds.write_csv(BufWriter::new(file))?;
    let n = ds.len();
    let summary = ExtractSummary {
        calibration: cal,
        excess_noise_flag: cal.excess_noise_flag(),
        n_samples: n,
        mean: ds.mean,
        variance: ds.variance,
        variance_std_error: ds.variance.filter(|_| n > 1).map(|v| v * (2.0 / (n - 1) as f64).sqrt()),
    };
    write_json(&sidecar_path(out_csv), &summary)?;
    Ok((ds, summary))
}

pub fn load_quadratures(path: &Path) -> anyhow::Result<QuadratureDataset> {
    let file = File::open(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    QuadratureDataset::read_csv(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

/// Reconstruction file: the effective configuration echoed next to the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionOutput {
    pub config: ReconstructionConfig,
    pub result: ReconstructionResult,
}

pub fn cmd_reconstruct(
    quadratures: &Path,
    cfg: &ReconstructionConfig,
    out: &Path,
) -> anyhow::Result<ReconstructionResult> {
    cfg.validate()?;
    let ds = load_quadratures(quadratures)?;
    ensure_dir(out)?;
    let result = reconstruct(&ds.samples, cfg).context("reconstruction failed")?;
    write_rows(
        &out.join(TRAJECTORY_FILE),
        "iteration,loglik",
        result
            .loglik_trajectory
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{i},{l:?}")),
    )?;
    let record = ReconstructionOutput {
        config: cfg.clone(),
        result,
    };
    write_json(&out.join(RECONSTRUCTION_FILE), &record)?;
    Ok(record.result)
}

/// `analyze` accepts a reconstruction file or a bare density matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum StateInput {
    Reconstruction(Box<ReconstructionOutput>),
    Bare(DensityMatrix),
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub mode: Option<PathBuf>,
    pub quadratures: Option<PathBuf>,
    pub rate_hz: Option<f64>,
    pub var_trig: Option<f64>,
    pub var_bck: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub stationarity: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub merit: MeritReport,
    /// ρ_nn for n = 0..=cutoff.
    pub populations: Vec<f64>,
    pub population_errors: Option<Vec<f64>>,
    /// How `population_errors` were obtained.
    pub error_method: Option<String>,
    pub fit: Option<FitSummary>,
    /// Trapezoid integral of the written Wigner grid.
    pub wigner_grid_integral: f64,
    pub wigner_grid_min: f64,
}

/// Figures of merit, a Wigner grid (`x,p,w`) and the phase-averaged marginal
/// against the data histogram (`q,model_density,data_density`).
pub fn cmd_analyze(
    state: &Path,
    opts: &AnalyzeOptions,
    report: &ReportConfig,
    out: &Path,
) -> anyhow::Result<AnalysisReport> {
    report.validate()?;
    let (rho, fit) = match read_json::<StateInput>(state)? {
        StateInput::Reconstruction(rec) => {
            let r = rec.result;
            let errors = r.diag_errors.clone().map(|e| {
                (
                    e,
                    format!("nonparametric bootstrap, {} resamples", r.bootstrap_resamples),
                )
            });
            let fit = FitSummary {
                iterations: r.iterations,
                converged: r.converged,
                stationarity: r.stationarity,
                n_samples: r.n_samples,
            };
            (r.rho, Some((fit, errors)))
        }
        StateInput::Bare(rho) => (rho, None),
    };
    let mut notes = Vec::new();
    let bandwidth_mhz = match &opts.mode {
        Some(p) => match mode_bandwidth(&load_mode(p)?) {
            Ok(b) => Some(b),
            Err(e) => {
                notes.push(format!("bandwidth unavailable: {e}"));
                None
            }
        },
        None => None,
    };
    let inputs = MeritInputs {
        var_trig: opts.var_trig,
        var_bck: opts.var_bck,
        herald_rate_hz: opts.rate_hz,
        bandwidth_mhz,
    };
    let mut merit = merit_report(&rho, &inputs)?;
    merit.notes.extend(notes);
    ensure_dir(out)?;

    let (integral, w_min) = write_wigner_grid(&rho, report, &out.join(&report.wigner_file))?;
    let data = opts.quadratures.as_deref().map(load_quadratures).transpose()?;
    write_marginal(&rho, data.as_ref(), report, &out.join(&report.marginal_file))?;

    let (fit, errors) = match fit {
        Some((f, e)) => (Some(f), e),
        None => (None, None),
    };
    let (population_errors, error_method) = match errors {
        Some((e, m)) => (Some(e), Some(m)),
        None => (None, None),
    };
    let analysis = AnalysisReport {
        merit,
        populations: rho.diagonal(),
        population_errors,
        error_method,
        fit,
        wigner_grid_integral: integral,
        wigner_grid_min: w_min,
    };
    write_json(&out.join(&report.report_file), &analysis)?;
    Ok(analysis)
}

fn grid(extent: f64, points: usize) -> impl Iterator<Item = f64> + Clone {
    let h = 2.0 * extent / (points - 1) as f64;
    (0..points).map(move |i| -extent + i as f64 * h)
}

fn write_wigner_grid(rho: &DensityMatrix, cfg: &ReportConfig, path: &Path) -> anyhow::Result<(f64, f64)> {
    let n = cfg.wigner_points;
    let h = 2.0 * cfg.wigner_extent / (n - 1) as f64;
    let edge = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut rows = Vec::with_capacity(n * n);
    let (mut integral, mut w_min) = (0.0, f64::INFINITY);
    for (i, x) in grid(cfg.wigner_extent, n).enumerate() {
        for (j, p) in grid(cfg.wigner_extent, n).enumerate() {
            let w = wigner(rho, x, p);
            integral += edge(i) * edge(j) * w;
            w_min = w_min.min(w);
            rows.push(format!("{x:?},{p:?},{w:?}"));
        }
    }
    write_rows(path, "x,p,w", rows)?;
    Ok((integral * h * h, w_min))
}

/// Phase-averaged marginal Σ ρ_nn ψ_n(q)².
pub fn averaged_marginal(rho: &DensityMatrix, q: f64) -> herald_core::Result<f64> {
    let psi = hermite_fns(rho.cutoff(), q)?;
    Ok(psi.iter().enumerate().map(|(n, p)| rho.population(n) * p * p).sum())
}

fn write_marginal(
    rho: &DensityMatrix,
    data: Option<&QuadratureDataset>,
    cfg: &ReportConfig,
    path: &Path,
) -> anyhow::Result<()> {
    let bins = cfg.histogram_bins;
    let lo = -cfg.wigner_extent;
    let width = 2.0 * cfg.wigner_extent / bins as f64;
    let density: Option<Vec<f64>> = data.filter(|d| !d.is_empty()).map(|d| {
        let mut counts = vec![0usize; bins];
        for s in &d.samples {
            let k = ((s.value - lo) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                counts[k as usize] += 1;
            }
        }
        let norm = 1.0 / (d.len() as f64 * width);
        counts.into_iter().map(|c| c as f64 * norm).collect()
    });
    let mut rows = Vec::with_capacity(bins);
    for k in 0..bins {
        let q = lo + (k as f64 + 0.5) * width;
        let model = averaged_marginal(rho, q)?;
        let observed = density.as_ref().map(|d| format!("{:?}", d[k])).unwrap_or_default();
        rows.push(format!("{q:?},{model:?},{observed}"));
    }
    write_rows(path, "q,model_density,data_density", rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub rho11: f64,
    pub wigner_origin: f64,
    pub g2_zero: Option<f64>,
}

/// Closed-loop comparison written by `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub truth: TruthComparison,
    pub mode_overlap: f64,
    pub mode: ModeSummary,
    /// Heralded variance at its peak sample over the vacuum variance there.
    pub peak_variance_ratio: f64,
    pub heralded: ExtractSummary,
    pub background: ExtractSummary,
    pub report: AnalysisReport,
}

/// simulate → mode → extract → reconstruct → analyze, each stage reading the
/// files written by the previous one.
pub fn cmd_pipeline(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<PipelineSummary> {
    cfg.validate_pipeline()?;
    let reduction = cfg.reconstruction.reduction;
    let truth = cmd_simulate(cfg, out).context("simulate stage")?;
    let (her, bg, vac) = (
        out.join(HERALDED_TRACES),
        out.join(BACKGROUND_TRACES),
        out.join(VACUUM_TRACES),
    );

    let (mode, mode_summary) = cmd_mode(&her, &bg, &cfg.mode_extraction, reduction, out).context("mode stage")?;
    let mode_path = out.join(MODE_FILE);

    let phases = match cfg.acquisition.phases {
        PhaseChoice::Recorded => PhaseInput::File(out.join(PHASES_FILE)),
        PhaseChoice::RandomUniform { seed } => PhaseInput::RandomUniform(seed),
    };
    let quad = out.join(QUADRATURES_FILE);
    let (_, heralded) = cmd_extract(&her, &mode_path, &vac, &phases, &quad).context("extract stage")?;
    let bg_phases = PhaseInput::RandomUniform(cfg.acquisition.seed);
    let (_, background) = cmd_extract(
        &bg,
        &mode_path,
        &vac,
        &bg_phases,
        &out.join(BACKGROUND_QUADRATURES_FILE),
    )
    .context("extract stage (background)")?;

    cmd_reconstruct(&quad, &cfg.reconstruction, out).context("reconstruct stage")?;

    let opts = AnalyzeOptions {
        mode: Some(mode_path),
        quadratures: Some(quad),
        rate_hz: cfg.source.herald_rate_hz,
        var_trig: heralded.variance,
        var_bck: background.variance,
    };
    let report = cmd_analyze(&out.join(RECONSTRUCTION_FILE), &opts, &cfg.report, out).context("analyze stage")?;

    let summary = PipelineSummary {
        truth: TruthComparison {
            rho11: truth.heralded_state.population(1),
            wigner_origin: herald_core::fock::wigner_origin(&truth.heralded_state),
            g2_zero: g2_zero(&truth.heralded_state).ok(),
        },
        mode_overlap: mode.overlap(&truth.mode),
        mode: mode_summary,
        peak_variance_ratio: peak_variance_ratio(&load_traces(&her)?, &load_traces(&vac)?, reduction)?,
        heralded,
        background,
        report,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn peak_variance_ratio(heralded: &TraceSet, vacuum: &TraceSet, reduction: Reduction) -> anyhow::Result<f64> {
    heralded.ensure_compatible(vacuum)?;
    let vh = variance_profile_with(heralded, reduction)?;
    let vv = variance_profile_with(vacuum, reduction)?;
    let peak = (0..vh.len()).max_by(|&a, &b| vh[a].total_cmp(&vh[b])).unwrap_or(0);
    if !(vv[peak] > 0.0) {
        bail!(Error::Degenerate(
            "vacuum variance vanishes at the heralded peak".into()
        ));
    }
    Ok(vh[peak] / vv[peak])
}
