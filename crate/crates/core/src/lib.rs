//! Bi-temporal change detection from structure features.
//!
//! The pipeline extracts oriented-gradient structure descriptors from both
//! acquisitions ([`cfog`]), correlates them over local neighborhoods and
//! measures template-matching displacement ([`neighborhood`]), and classifies
//! the resulting per-pixel `(r, a, b, ME)` vectors with a random forest
//! ([`forest`]). [`baselines`] holds the intensity-domain reference
//! detectors, [`eval`] the accuracy metrics and [`synth`] a seeded scene
//! generator. [`pipeline`] wires the stages into the command-line workflow.

pub mod baselines;
pub mod cfog;
pub mod error;
pub mod eval;
pub mod forest;
pub mod neighborhood;
mod padding;
pub mod pipeline;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
