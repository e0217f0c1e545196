//! Temporal-mode estimation from trigger-aligned homodyne traces.
//!
//! The variance profile shows |ψ(t)|²; the principal eigenvector of the
//! background-subtracted photocurrent autocorrelation gives ψ(t) itself,
//! and its eigenvalue share measures how single-mode the heralded light is.

mod mode;
mod stats;
mod trace;

pub use mode::{
    extract_mode, extract_mode_with, mode_bandwidth, mode_from_excess, ExtractedMode, TemporalMode, TemporalModeRecord,
    BANDWIDTH_ZERO_PAD, DEGENERACY_GAP,
};
pub use stats::{
    autocorrelation_matrix, autocorrelation_matrix_with, mean_profile, variance_profile, variance_profile_with,
};
pub use trace::{
    Trace, TraceMeta, TraceSet, TraceView, HTRC_HEADER_LEN, HTRC_MAGIC, HTRC_VERSION, MAX_TRACE_LEN, MIN_TRACE_LEN,
};
