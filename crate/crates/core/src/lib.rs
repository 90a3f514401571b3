//! Simulation and frequency-domain analysis of a pair of coupled waves, one of
//! them damped locally by a viscoelastic past-history term.

pub mod analysis;
pub mod banded;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod memory;
pub mod model;
pub mod resonance;
pub mod spectral;

pub use error::{Error, Result};
