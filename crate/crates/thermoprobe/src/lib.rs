//! Numerical toolkit for designing equilibrium temperature probes.
//!
//! A probe is an energy spectrum read out at thermal equilibrium. Its
//! usefulness on a temperature window is measured by the range-averaged
//! inverse sensitivity G (smaller is better). This crate computes that
//! measure, optimizes spectra and physical spin-chain realizations against
//! it, maps out how the optimal structure changes with the window ratio,
//! solves the inverse problem of realizing a target spectrum with
//! multi-spin couplings, and validates the resulting probes with maximum
//! likelihood estimation experiments.

pub mod analytic;
pub mod chain_opt;
pub mod error;
pub mod estimator;
pub mod hamiltonian;
pub mod io;
pub mod optim;
pub mod phase_sweep;
pub mod spectrum_opt;
pub mod thermal;

mod quad;
mod rng;
mod solve;

pub use error::{Error, Result};
pub use thermal::{EnergySpectrum, QuadratureConfig, TemperatureRange};
