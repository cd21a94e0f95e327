//! Physical constants (CODATA 2018 exact or recommended values) and material presets.

use serde::Serialize;

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const GRAVITATIONAL: f64 = 6.674_30e-11;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Pascal per millibar.
pub const PA_PER_MBAR: f64 = 100.0;

/// Apparent nanodiamond density that makes a 91 nm radius weigh 9.6e-18 kg.
pub const NANODIAMOND_DENSITY: f64 = 3040.0;
pub const BULK_DIAMOND_DENSITY: f64 = 3500.0;
/// Mass of an N2 molecule.
pub const N2_MOLECULE_MASS: f64 = 4.65e-26;
/// Epstein drag prefactor for diffuse reflection.
pub const EPSTEIN_PREFACTOR: f64 = 15.8;

/// Bundle of the constants, for reports that echo what was used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    pub k_b: f64,
    pub hbar: f64,
    pub g: f64,
    pub c: f64,
}

impl PhysicalConstants {
    pub const CODATA: PhysicalConstants = PhysicalConstants {
        k_b: BOLTZMANN,
        hbar: HBAR,
        g: GRAVITATIONAL,
        c: SPEED_OF_LIGHT,
    };
}

/// Density presets selectable by name in configuration files.
pub fn density_preset(name: &str) -> Option<f64> {
    match name {
        "nanodiamond" => Some(NANODIAMOND_DENSITY),
        "diamond" | "bulk_diamond" => Some(BULK_DIAMOND_DENSITY),
        _ => None,
    }
}
