//! Resonance combinatorics, refined standing-wave profiles and radiation
//! damping rates for 1D nonlinear Schrodinger operators, plus a time-domain
//! simulator exhibiting standing-wave selection.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fgr;
pub mod indices;
pub mod profile;
pub mod spectral;

pub use error::{Error, Result};
