//! Iterative maximum-likelihood state reconstruction from homodyne data.
//!
//! Each iteration applies ρ → RρR / tr(RρR) with R = Σ_j (f_j / p_j) Π_j.
//! When a full step would lower the likelihood the diluted update
//! (I + εR)ρ(I + εR) is used instead, so the trajectory never decreases.

mod data;
mod em;

pub use data::{Binning, LikelihoodData};
pub use em::{
    iteration_step, likelihood_data, log_likelihood, reconstruct, reconstruct_data, stationarity, ReconstructionConfig,
    ReconstructionResult, MIN_SAMPLES_ADVISED, PROB_FLOOR,
};
