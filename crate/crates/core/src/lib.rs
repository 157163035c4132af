//! Purcell enhancement of NV-centre emission in open Fabry-Pérot microcavities.
//!
//! Dielectric mirror simulation, cavity geometry and loss budgets, an emitter
//! model with phonon sidebands, Purcell factors from both the ideal and the
//! broadband rate-equation pictures, and analysis of measured spectra.

pub mod analysis;
pub mod cavity;
pub mod constants;
pub mod emitter;
pub mod error;
pub mod lm;
pub mod purcell;
pub mod quad;
pub mod spectrum;
pub mod stack;
pub mod synth;

pub use error::{Error, FitDiagnostic, Result};
pub use spectrum::Spectrum;
