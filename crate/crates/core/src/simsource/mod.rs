//! Heralded two-mode squeezed source: analytic conditional states and a
//! trace-level homodyne synthesizer that serves as ground truth for the
//! analysis modules.

mod params;
mod sampler;
mod state;
mod synth;

pub use params::{ModeShape, SourceParams, TraceConfig};
pub use sampler::{sample_quadrature, QuadratureSampler, SAMPLER_GRID_EDGE, SAMPLER_GRID_POINTS, SAMPLER_MASS_TOL};
pub use state::{background_state, heralded_state, thermal_state, TRUNCATION_WARN};
pub use synth::{mode_basis, synthesize_traces, synthesize_vacuum, GroundTruth, SyntheticData, EXPLICIT_BASIS_MAX};
