//! Simulation and homodyne-tomography analysis of a heralded narrowband
//! single-photon source.
//!
//! The crate is organised as the analysis pipeline runs:
//!
//! - [`simsource`] models the two-mode squeezed source with losses, background
//!   and false heralds, and synthesizes trigger-aligned homodyne traces;
//! - [`tmode`] estimates the temporal mode from variance and autocorrelation
//!   of those traces;
//! - [`quad`] projects traces onto the mode and calibrates against vacuum;
//! - [`mlrecon`] reconstructs the density matrix by iterative maximum likelihood;
//! - [`merit`] derives g⁽²⁾(0), Mandel Q, cross-correlation and brightness.
//!
//! [`fock`] holds the shared Fock-basis machinery.

pub mod error;
pub mod fock;
pub mod merit;
pub mod mlrecon;
pub mod quad;
pub mod reduce;
pub mod simsource;
pub mod tmode;

pub use error::{Error, Result};
