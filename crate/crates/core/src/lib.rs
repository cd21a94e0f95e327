//! Simulation and analysis toolkit for a charged nanoparticle levitated in an
//! end-cap Paul trap.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`], [`constants`] and [`config`] hold the shared domain types and
//!   the key-value configuration format.
//! * [`trap`] contains the closed-form Mathieu mathematics (stability,
//!   characteristic exponents, secular frequencies).
//! * [`dynamics`] integrates the stochastic equations of motion.
//! * [`signal`] turns motion into detector volts and back into spectra, fits
//!   and calibrations.
//! * [`feedback`] implements the IQ-demodulation cold-damping controller.
//! * [`characterize`] extracts charge-to-mass and radius from scans.
//! * [`decohere`] evaluates decoherence and internal-heating budgets.

pub mod characterize;
pub mod config;
pub mod constants;
pub mod decohere;
pub mod dynamics;
pub mod error;
pub mod feedback;
pub mod params;
pub mod signal;
pub mod trap;

pub use config::Config;
pub use error::{Error, Result};
pub use params::{Axis, Environment, ParticleSpec, StrayDrift, TrapConfig};
