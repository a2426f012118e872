//! Modeling, simulation, and data-analysis toolkit for high-EJ/EC transmon
//! qudits.
//!
//! The crate predicts transmon spectra, charge dispersion, dispersive shifts,
//! ZZ couplings, and relaxation budgets from circuit parameters; fits circuit
//! parameters (including Josephson harmonics) to measured frequencies; and
//! simulates and classifies multi-tone single-shot readout.
//!
//! # Unit conventions
//!
//! All energies are stored as `E/h` in GHz, all times in microseconds, and
//! all rates in inverse microseconds. Angular-frequency factors of 2π are
//! applied internally and documented where each formula is implemented.

pub mod analysis;
pub mod coupling;
pub mod device;
pub mod discriminate;
pub mod dispersive;
pub mod error;
pub mod hamiltonian;
pub mod io;
pub mod noise;
pub mod numeric;
pub mod paramfit;
pub mod readout;
pub mod spectrum;

pub use error::{Error, Result};
pub use hamiltonian::{EigenSolution, TransmonModel};
// re-exports grow as modules land

/// Cycles per microsecond for a 1 GHz ordinary frequency.
pub(crate) const CYCLES_PER_US_PER_GHZ: f64 = 1.0e3;

/// Angular rate (rad/µs) of a 1 GHz ordinary frequency.
pub(crate) const ANGULAR_PER_US_PER_GHZ: f64 = 2.0 * std::f64::consts::PI * CYCLES_PER_US_PER_GHZ;

/// Planck constant over Boltzmann constant, in kelvin per GHz.
pub(crate) const H_OVER_KB_K_PER_GHZ: f64 = 4.799_243_073e-2;

/// Planck constant in µeV per GHz.
pub(crate) const H_UEV_PER_GHZ: f64 = 4.135_667_696;
