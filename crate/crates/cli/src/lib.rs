//! `herald`: batch front end for simulating, extracting and reconstructing
//! heralded single-photon homodyne data.
//!
//! Every stage reads and writes plain files, so a run can be resumed or
//! inspected at any boundary.

pub mod commands;
pub mod config;
mod output;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use herald_core::reduce::Reduction;

pub use commands::*;
pub use config::{Acquisition, ModeExtraction, PhaseChoice, PipelineConfig, ReportConfig};

#[derive(Debug, Parser)]
#[command(
    name = "herald",
    version,
    about = "Heralded single-photon homodyne tomography pipeline"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Use fixed-order reductions so outputs are byte-identical across thread counts.
    #[arg(long, global = true)]
    pub bit_exact: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration source shared by commands that need one.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// Pipeline configuration JSON.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset: paper-scale or low-gain.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize heralded, background and vacuum traces.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the temporal mode from heralded and background traces.
    Mode {
        #[arg(long)]
        heralded: PathBuf,
        #[arg(long)]
        background: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project traces onto a mode and write calibrated quadratures.
    Extract {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        mode: PathBuf,
        #[arg(long)]
        vacuum: PathBuf,
        /// Per-trace phases (`index,theta_rad`); random uniform phases otherwise.
        #[arg(long)]
        phases: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        phase_seed: u64,
        /// Output quadrature CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-likelihood density matrix from quadratures.
    Reconstruct {
        #[arg(long)]
        quadratures: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        cutoff: Option<usize>,
        /// Bootstrap seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Figures of merit, Wigner grid and marginal for a reconstructed state.
    Analyze {
        /// Reconstruction JSON or bare density-matrix JSON.
        #[arg(long)]
        rho: PathBuf,
        #[arg(long)]
        mode: Option<PathBuf>,
        #[arg(long)]
        quadratures: Option<PathBuf>,
        #[arg(long)]
        rate_hz: Option<f64>,
        #[arg(long)]
        var_trig: Option<f64>,
        #[arg(long)]
        var_bck: Option<f64>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage in sequence.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a preset configuration.
    Preset { name: String },
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<Option<PipelineConfig>> {
        match (&self.config, &self.preset) {
            (Some(path), _) => PipelineConfig::load(path).map(Some),
            (None, Some(name)) => PipelineConfig::preset(name).map(Some),
            (None, None) => Ok(None),
        }
    }

    fn require(&self) -> anyhow::Result<PipelineConfig> {
        self.load()?
            .ok_or_else(|| config::input("a --config file or --preset name is required").into())
    }
}

fn reduction(bit_exact: bool) -> Reduction {
    if bit_exact {
        Reduction::FixedOrder
    } else {
        Reduction::Parallel
    }
}

/// Runs one command, printing a short summary to stdout.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let red = reduction(cli.bit_exact);
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = config.require()?;
            if let Some(s) = seed {
                cfg.acquisition.seed = s;
            }
            let truth = cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} heralded, {} background, {} vacuum traces to {} (true rho11 = {:.4})",
                cfg.acquisition.n_heralds,
                cfg.acquisition.n_background,
                cfg.acquisition.n_vacuum,
                out.display(),
                truth.heralded_state.population(1)
            );
        }
        Command::Mode {
            heralded,
            background,
            config,
            out,
        } => {
            let opts = config.load()?.map(|c| c.mode_extraction).unwrap_or_default();
            let (mode, summary) = cmd_mode(&heralded, &background, &opts, red, &out)?;
            println!("mode: {} samples, purity {:.4}", mode.len(), summary.purity);
            if let Some(b) = summary.bandwidth_mhz {
                println!("bandwidth: {b:.2} MHz");
            }
            for w in &summary.warnings {
                println!("warning: {w}");
            }
        }
        Command::Extract {
            traces,
            mode,
            vacuum,
            phases,
            phase_seed,
            out,
        } => {
            let phases = match phases {
                Some(p) => PhaseInput::File(p),
                None => PhaseInput::RandomUniform(phase_seed),
            };
            let (_, s) = cmd_extract(&traces, &mode, &vacuum, &phases, &out)?;
            match (s.variance, s.variance_std_error) {
                (Some(v), Some(e)) => println!("{} quadratures, variance {v:.5} ± {e:.5}", s.n_samples),
                _ => println!("{} quadratures", s.n_samples),
            }
            if s.excess_noise_flag {
                println!("warning: raw vacuum noise exceeds shot noise by more than 50%");
            }
        }
        Command::Reconstruct {
            quadratures,
            config,
            cutoff,
            seed,
            out,
        } => {
            let mut rc = config.load()?.map(|c| c.reconstruction).unwrap_or_default();
            if let Some(c) = cutoff {
                rc.cutoff = c;
            }
            if let Some(s) = seed {
                rc.rseed = s;
            }
            rc.reduction = red;
            let r = cmd_reconstruct(&quadratures, &rc, &out)?;
            println!(
                "rho11 = {:.4} after {} iterations (converged: {})",
                r.rho.population(1),
                r.iterations,
                r.converged
            );
        }
        Command::Analyze {
            rho,
            mode,
            quadratures,
            rate_hz,
            var_trig,
            var_bck,
            config,
            out,
        } => {
            let report = config.load()?.map(|c| c.report).unwrap_or_default();
            let opts = AnalyzeOptions {
                mode,
                quadratures,
                rate_hz,
                var_trig,
                var_bck,
            };
            let a = cmd_analyze(&rho, &opts, &report, &out)?;
            print_merit(&a);
        }
        Command::Pipeline {
            config,
            seed,
            cutoff,
            out,
        } => {
            let mut cfg = config.require()?;
            if let Some(s) = seed {
                cfg.acquisition.seed = s;
            }
            if let Some(c) = cutoff {
                cfg.reconstruction.cutoff = c;
            }
            cfg.reconstruction.reduction = red;
            let s = cmd_pipeline(&cfg, &out)?;
            println!("true rho11 = {:.4}, mode overlap {:.5}", s.truth.rho11, s.mode_overlap);
            print_merit(&s.report);
        }
        Command::Preset { name } => {
            print!("{}", PipelineConfig::preset(&name).context("unknown preset")?.to_json());
        }
    }
    Ok(())
}

fn print_merit(a: &AnalysisReport) {
    let m = &a.merit;
    match a.population_errors.as_ref().and_then(|e| e.get(1)) {
        Some(e) => println!("rho11 = {:.4} ± {e:.4}", m.rho11),
        None => println!("rho11 = {:.4}", m.rho11),
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
    println!("W(0,0) = {:.5}", m.wigner_origin);
    println!("g2(0) = {}, Mandel Q = {}", opt(m.g2_zero), opt(m.mandel_q));
    if let Some(b) = m.spectral_brightness_per_mhz_s {
        println!("spectral brightness = {b:.0} photons/(s·MHz)");
    }
    for n in &m.notes {
        println!("note: {n}");
    }
}

/// 2 for bad inputs or files, 3 for data that is valid but numerically unusable.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<herald_core::Error>() {
            return if e.is_input_error() { 2 } else { 3 };
        }
    }
    2
}
