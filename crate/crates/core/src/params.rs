//! Shared domain types: the particle, the trap and its environment.
//!
//! All values are SI. Constructors validate the invariants and the types are
//! immutable afterwards, so they can be shared freely between runs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{N2_MOLECULE_MASS, NANODIAMOND_DENSITY};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::validation(format!("unknown axis '{other}'"))),
        }
    }
}

/// Volume of a sphere.
pub fn sphere_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    pub mass: f64,
    pub radius: f64,
    pub density: f64,
    /// Signed charge in coulomb.
    pub charge: f64,
    /// Optical absorption coefficient in 1/m.
    pub absorption_coefficient: f64,
}

impl ParticleSpec {
    /// Builds a homogeneous sphere; the mass follows from radius and density.
    pub fn from_radius_density(radius: f64, density: f64, charge: f64) -> Result<Self> {
        check_positive("particle.radius", radius)?;
        check_positive("particle.density", density)?;
        let p = ParticleSpec {
            mass: density * sphere_volume(radius),
            radius,
            density,
            charge,
            absorption_coefficient: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Sphere of given mass and density; the radius follows.
    pub fn from_mass_density(mass: f64, density: f64, charge: f64) -> Result<Self> {
        check_positive("particle.mass", mass)?;
        check_positive("particle.density", density)?;
        let radius = (3.0 * mass / (4.0 * PI * density)).cbrt();
        let p = ParticleSpec {
            mass,
            radius,
            density,
            charge,
            absorption_coefficient: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Nanodiamond of the given radius at the default apparent density, with
    /// the charge set from a charge-to-mass ratio.
    pub fn nanodiamond(radius: f64, charge_to_mass: f64) -> Result<Self> {
        let mut p = Self::from_radius_density(radius, NANODIAMOND_DENSITY, 0.0)?;
        p.charge = charge_to_mass * p.mass;
        Ok(p)
    }

    pub fn with_charge_to_mass(mut self, charge_to_mass: f64) -> Self {
        self.charge = charge_to_mass * self.mass;
        self
    }

    pub fn with_absorption(mut self, alpha: f64) -> Self {
        self.absorption_coefficient = alpha;
        self
    }

    pub fn charge_to_mass(&self) -> f64 {
        self.charge / self.mass
    }

    pub fn volume(&self) -> f64 {
        sphere_volume(self.radius)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("particle.mass", self.mass)?;
        check_positive("particle.radius", self.radius)?;
        check_positive("particle.density", self.density)?;
        if !self.charge.is_finite() {
            return Err(Error::validation("particle.charge must be finite"));
        }
        if !(self.absorption_coefficient >= 0.0 && self.absorption_coefficient.is_finite()) {
            return Err(Error::validation(
                "particle.absorption_coefficient must be >= 0",
            ));
        }
        let implied = self.density * sphere_volume(self.radius);
        if ((self.mass - implied) / self.mass).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "particle mass {:e} kg inconsistent with density*volume = {:e} kg",
                self.mass, implied
            )));
        }
        Ok(())
    }

    /// Trapping operations need a charged particle.
    pub fn require_charged(&self) -> Result<()> {
        if self.charge == 0.0 {
            Err(Error::validation(
                "particle.charge must be non-zero to trap",
            ))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Zero-to-peak RF amplitude V0.
    pub drive_amplitude: f64,
    /// RF angular frequency Ω in rad/s.
    pub drive_frequency: f64,
    pub geometric_efficiency: f64,
    /// Efficiency of the DC electrodes; defaults to the RF value.
    pub dc_efficiency: f64,
    pub characteristic_distance: f64,
    /// Axial DC voltage (source of a_z).
    pub dc_voltage: f64,
    /// Radial asymmetry ε splitting the x and y modes.
    pub radial_asymmetry: f64,
    /// Force per applied electrode volt on each axis, N/V.
    pub electrode_coupling: [f64; 3],
}

impl TrapConfig {
    pub const DEFAULT_EFFICIENCY: f64 = 0.8;
    pub const DEFAULT_DISTANCE: f64 = 0.5e-3;

    pub fn new(drive_amplitude: f64, drive_frequency: f64) -> Self {
        TrapConfig {
            drive_amplitude,
            drive_frequency,
            geometric_efficiency: Self::DEFAULT_EFFICIENCY,
            dc_efficiency: Self::DEFAULT_EFFICIENCY,
            characteristic_distance: Self::DEFAULT_DISTANCE,
            dc_voltage: 0.0,
            radial_asymmetry: 0.0,
            electrode_coupling: [0.0; 3],
        }
    }

    pub fn with_asymmetry(mut self, eps: f64) -> Self {
        self.radial_asymmetry = eps;
        self
    }

    pub fn with_coupling(mut self, coupling: [f64; 3]) -> Self {
        self.electrode_coupling = coupling;
        self
    }

    pub fn with_amplitude(mut self, v0: f64) -> Self {
        self.drive_amplitude = v0;
        self
    }

    /// Drive frequency in Hz.
    pub fn drive_frequency_hz(&self) -> f64 {
        self.drive_frequency / (2.0 * PI)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drive_amplitude >= 0.0 && self.drive_amplitude.is_finite()) {
            return Err(Error::validation("trap.drive_amplitude must be >= 0"));
        }
        check_positive("trap.drive_frequency", self.drive_frequency)?;
        check_positive("trap.characteristic_distance", self.characteristic_distance)?;
        for (name, eta) in [
            ("trap.geometric_efficiency", self.geometric_efficiency),
            ("trap.dc_efficiency", self.dc_efficiency),
        ] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::validation(format!(
                    "{name} must lie in (0, 1], got {eta}"
                )));
            }
        }
        if !(0.0..=0.2).contains(&self.radial_asymmetry) {
            return Err(Error::validation(format!(
                "trap.radial_asymmetry must lie in [0, 0.2], got {}",
                self.radial_asymmetry
            )));
        }
        if !self.dc_voltage.is_finite() || self.electrode_coupling.iter().any(|k| !k.is_finite()) {
            return Err(Error::validation(
                "trap DC voltage and couplings must be finite",
            ));
        }
        Ok(())
    }
}

/// Slowly decaying stray field left behind by electrospray charging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrayDrift {
    /// Field at t = 0 in V/m per axis.
    pub initial_field: [f64; 3],
    pub decay_time: f64,
    /// Fractional excess of the effective drive amplitude at t = 0.
    pub drive_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub pressure: f64,
    pub gas_temperature: f64,
    pub gas_molecule_mass: f64,
    pub stray_drift: Option<StrayDrift>,
}

impl Environment {
    /// Room-temperature nitrogen at the given pressure in Pa.
    pub fn nitrogen(pressure: f64) -> Self {
        Environment {
            pressure,
            gas_temperature: 300.0,
            gas_molecule_mass: N2_MOLECULE_MASS,
            stray_drift: None,
        }
    }

    pub fn with_pressure(mut self, pressure: f64) -> Self {
        self.pressure = pressure;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pressure >= 0.0 && self.pressure.is_finite()) {
            return Err(Error::validation("env.pressure must be >= 0"));
        }
        check_positive("env.gas_temperature", self.gas_temperature)?;
        check_positive("env.gas_molecule_mass", self.gas_molecule_mass)?;
        if let Some(d) = &self.stray_drift {
            check_positive("env.stray_decay_time", d.decay_time)?;
            if d.initial_field.iter().any(|e| !e.is_finite()) || !d.drive_drift.is_finite() {
                return Err(Error::validation("stray drift values must be finite"));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "{name} must be > 0, got {value}"
        )))
    }
}
