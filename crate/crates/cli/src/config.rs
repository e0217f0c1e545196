use std::path::Path;

use anyhow::{bail, Context};
use herald_core::mlrecon::ReconstructionConfig;
use herald_core::quad::MIN_VACUUM_TRACES;
use herald_core::simsource::SourceParams;
use serde::{Deserialize, Serialize};

/// Complete description of a simulate → analyze run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: SourceParams,
    pub acquisition: Acquisition,
    #[serde(default)]
    pub mode_extraction: ModeExtraction,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub n_heralds: usize,
    pub n_background: usize,
    pub n_vacuum: usize,
    pub seed: u64,
    /// How local-oscillator phases are attached to heralded quadratures.
    #[serde(default)]
    pub phases: PhaseChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseChoice {
    /// Use the phases logged by the simulator alongside the traces.
    Recorded,
    /// Draw fresh uniform phases (phase-randomized acquisition).
    RandomUniform { seed: u64 },
}

impl Default for PhaseChoice {
    fn default() -> Self {
        PhaseChoice::RandomUniform { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeExtraction {
    /// A warning is recorded when the extracted mode purity falls below this.
    pub min_purity: f64,
}

impl Default for ModeExtraction {
    fn default() -> Self {
        ModeExtraction { min_purity: 0.5 }
    }
}

/// Output file names and plot grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub report_file: String,
    pub wigner_file: String,
    pub marginal_file: String,
    /// Wigner grid covers [−extent, extent]² ...
    pub wigner_extent: f64,
    /// ... with this many points per axis.
    pub wigner_points: usize,
    pub histogram_bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            report_file: "report.json".into(),
            wigner_file: "wigner.csv".into(),
            marginal_file: "marginal.csv".into(),
            wigner_extent: 6.0,
            wigner_points: 121,
            histogram_bins: 96,
        }
    }
}

impl ReportConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.wigner_extent > 0.0 && self.wigner_extent.is_finite()) {
            bail!(input(format!(
                "wigner_extent must be positive, got {}",
                self.wigner_extent
            )));
        }
        if self.wigner_points < 2 || self.histogram_bins == 0 {
            bail!(input("wigner_points must be at least 2 and histogram_bins at least 1"));
        }
        for name in [&self.report_file, &self.wigner_file, &self.marginal_file] {
            if name.is_empty() || Path::new(name).components().count() != 1 {
                bail!(input(format!("output name '{name}' must be a plain file name")));
            }
        }
        Ok(())
    }
}

pub(crate) fn input(msg: impl Into<String>) -> herald_core::Error {
    herald_core::Error::Input(msg.into())
}

impl PipelineConfig {
    pub fn preset(name: &str) -> anyhow::Result<Self> {
        let source = SourceParams::preset(name)?;
        // The low-gain state carries almost nothing above two photons; a small
        // cutoff keeps estimator noise out of ⟨n(n−1)⟩.
        let cutoff = if name == "low-gain" { 4 } else { 10 };
        Ok(PipelineConfig {
            source,
            acquisition: Acquisition {
                n_heralds: 100_000,
                n_background: 100_000,
                n_vacuum: 100_000,
                seed: 1,
                phases: PhaseChoice::default(),
            },
            mode_extraction: ModeExtraction::default(),
            reconstruction: ReconstructionConfig {
                cutoff,
                ..Default::default()
            },
            report: ReportConfig::default(),
        })
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(herald_core::Error::from)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(herald_core::Error::from)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Checks every section before any stage runs.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.source.validate()?;
        self.reconstruction.validate()?;
        self.report.validate()?;
        if !(0.0..=1.0).contains(&self.mode_extraction.min_purity) {
            bail!(input("min_purity must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Extra requirements of a full pipeline run.
    pub fn validate_pipeline(&self) -> anyhow::Result<()> {
        self.validate()?;
        let a = &self.acquisition;
        if a.n_heralds == 0 || a.n_background == 0 {
            bail!(input("pipeline needs heralded and background traces"));
        }
        if a.n_vacuum < MIN_VACUUM_TRACES {
            bail!(input(format!(
                "pipeline needs at least {MIN_VACUUM_TRACES} vacuum traces"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_and_validate() {
        for name in ["paper-scale", "low-gain"] {
            let cfg = PipelineConfig::preset(name).unwrap();
            cfg.validate_pipeline().unwrap();
            assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
        assert!(PipelineConfig::preset("bright").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value =
            serde_json::from_str(&PipelineConfig::preset("low-gain").unwrap().to_json()).unwrap();
        v["acquisition"]["n_herald"] = 5.into();
        assert!(PipelineConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn sections_default_when_omitted() {
        let mut v: serde_json::Value =
            serde_json::from_str(&PipelineConfig::preset("paper-scale").unwrap().to_json()).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("report");
        obj.remove("mode_extraction");
        let cfg = PipelineConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(cfg.report, ReportConfig::default());
    }

    #[test]
    fn bad_report_names_fail_validation() {
        let mut cfg = PipelineConfig::preset("paper-scale").unwrap();
        cfg.report.wigner_file = "../w.csv".into();
        assert!(cfg.validate().is_err());
    }
}
