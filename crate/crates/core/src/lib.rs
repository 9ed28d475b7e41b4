//! Partial-regularity diagnostics for steady Navier-Stokes fields in six
//! dimensions.

pub mod cutoff;
pub mod detector;
pub mod energy;
pub mod error;
pub mod field;
pub mod gauss;
pub mod harness;
pub mod generators;
pub mod pressure;
pub mod quadrature;
pub mod quantities;
pub mod runner;

pub use error::{Error, Result};
