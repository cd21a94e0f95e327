use std::f64::consts::PI;
use std::path::Path;

use levitrap::trap::{mathieu_parameters, secular_frequencies, BetaModel};
use levitrap::{Axis, Error, ParticleSpec, Result, TrapConfig};

mod cool;
mod decohere;
mod fit;
mod simulate;

pub use cool::cool;
pub use decohere::{decohere, heat_balance};
pub use fit::{fit_mass, fit_qm};
pub use simulate::{psd, simulate};

/// RF drive of the operating point, 100 kHz.
const DRIVE: f64 = 2.0 * PI * 1e5;
const OPERATING_Q: f64 = 0.1745;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

/// Drive amplitude that puts a particle with `qm` at axial `q`.
fn amplitude_for(trap: &TrapConfig, qm: f64, q: f64) -> f64 {
    q * trap.characteristic_distance.powi(2) * trap.drive_frequency.powi(2)
        / (4.0 * qm * trap.geometric_efficiency)
}

/// The 100 kHz trap with the drive set to the operating point for `qm`.
fn operating_trap(qm: f64) -> TrapConfig {
    let t = TrapConfig::new(1.0, DRIVE);
    t.with_amplitude(amplitude_for(&t, qm, OPERATING_Q))
}

/// Secular frequency of `axis` in Hz from the exact exponent.
fn secular_hz(particle: &ParticleSpec, trap: &TrapConfig, axis: Axis) -> Result<f64> {
    let mp = mathieu_parameters(particle, trap);
    let w = secular_frequencies(&mp, trap.drive_frequency, BetaModel::Exact)?[axis.index()];
    Ok(w / (2.0 * PI))
}

fn log_grid(low: f64, high: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let (a, b) = (low.ln(), high.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
