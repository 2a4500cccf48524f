//! Simulation and estimation toolkit for continuously monitored bosons:
//! conditional Gaussian and number-basis dynamics, filter-based estimators
//! built from the measurement record, and binning-based recovery of
//! conditional moments.

pub mod error;
pub mod experiment;
pub mod filter;
pub mod fock;
pub mod gaussian;
pub mod postselect;
pub mod stochastic;

pub use error::{Error, Result};
