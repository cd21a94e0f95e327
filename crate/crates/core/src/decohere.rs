//! Decoherence and thermal budgets: background-gas scattering, the
//! Diósi–Penrose gravitational self-energy, and the laser-heating versus
//! radiative-cooling balance of the internal temperature.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, GRAVITATIONAL, HBAR, PA_PER_MBAR};
use crate::error::{Error, Result};
use crate::params::{check_positive, ParticleSpec};

/// Provenance of results computed directly from the published formulas.
pub const PROVENANCE_FORMULA: &str = "closed-form";
/// Provenance of results that depend on the anchor-calibrated radiative law.
pub const PROVENANCE_CALIBRATED: &str = "calibrated-model";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasDecoherenceQuery {
    pub pressure: f64,
    pub radius: f64,
    pub gas_molecule_mass: f64,
    pub environment_temperature: f64,
}

impl GasDecoherenceQuery {
    fn validate(&self) -> Result<()> {
        if !(self.pressure >= 0.0 && self.pressure.is_finite()) {
            return Err(Error::validation("pressure must be >= 0"));
        }
        check_positive("radius", self.radius)?;
        check_positive("gas_molecule_mass", self.gas_molecule_mass)?;
        check_positive("environment_temperature", self.environment_temperature)
    }
}

/// Rate per unit pressure, `(16π√(2π)/√3) R² / √(3 m_a k_B T)`.
fn rate_per_pascal(radius: f64, gas_molecule_mass: f64, temperature: f64) -> f64 {
    16.0 * PI * (2.0 * PI).sqrt() / 3f64.sqrt() * radius * radius
        / (3.0 * gas_molecule_mass * BOLTZMANN * temperature).sqrt()
}

/// Decoherence rate from scattering of gas molecules, in 1/s.
pub fn gas_decoherence_rate(q: &GasDecoherenceQuery) -> Result<f64> {
    q.validate()?;
    Ok(q.pressure * rate_per_pascal(q.radius, q.gas_molecule_mass, q.environment_temperature))
}

/// Pressure in Pa at which `γ_a · t` equals `budget`.
pub fn min_pressure(
    interferometer_time: f64,
    radius: f64,
    gas_molecule_mass: f64,
    environment_temperature: f64,
    budget: f64,
) -> Result<f64> {
    if !(interferometer_time > 0.0) {
        return Err(Error::validation("interferometer_time must be > 0"));
    }
    check_positive("budget", budget)?;
    check_positive("radius", radius)?;
    check_positive("gas_molecule_mass", gas_molecule_mass)?;
    check_positive("environment_temperature", environment_temperature)?;
    Ok(budget
        / (interferometer_time
            * rate_per_pascal(radius, gas_molecule_mass, environment_temperature)))
}

pub fn pa_to_mbar(p: f64) -> f64 {
    p / PA_PER_MBAR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpQuery {
    /// kg.
    pub mass: f64,
    /// m.
    pub radius: f64,
    /// Separation of the two branches, m.
    pub separation: f64,
}

impl DpQuery {
    /// Homogeneous sphere of the given mass and density.
    pub fn from_density(mass: f64, density: f64, separation: f64) -> Result<Self> {
        let p = ParticleSpec::from_mass_density(mass, density, 0.0)?;
        Ok(DpQuery {
            mass,
            radius: p.radius,
            separation,
        })
    }

    fn validate(&self) -> Result<()> {
        check_positive("mass", self.mass)?;
        check_positive("radius", self.radius)?;
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::validation("separation must be >= 0"));
        }
        Ok(())
    }
}

/// Overlap factor of two uniform spheres at centre distance `2Rλ`:
/// `2λ² − 1.5λ³ + 0.2λ⁵` up to contact and `1.2 − 0.5/λ` beyond.
pub fn dp_overlap_factor(lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("λ must be >= 0, got {lambda}")));
    }
    Ok(if lambda <= 1.0 {
        let l2 = lambda * lambda;
        2.0 * l2 - 1.5 * l2 * lambda + 0.2 * l2 * l2 * lambda
    } else {
        1.2 - 0.5 / lambda
    })
}

/// Gravitational self-energy of the superposition, `E_G = (G M²/R) f(d/2R)`, in J.
pub fn dp_self_energy(q: &DpQuery) -> Result<f64> {
    q.validate()?;
    let f = dp_overlap_factor(q.separation / (2.0 * q.radius))?;
    Ok(GRAVITATIONAL * q.mass * q.mass / q.radius * f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Lifetime {
    Finite {
        seconds: f64,
    },
    /// No self-energy difference (zero separation).
    Infinite,
}

impl Lifetime {
    pub fn seconds(&self) -> f64 {
        match self {
            Lifetime::Finite { seconds } => *seconds,
            Lifetime::Infinite => f64::INFINITY,
        }
    }
}

/// Collapse time `ħ/E_G`.
pub fn dp_lifetime(q: &DpQuery) -> Result<Lifetime> {
    let e = dp_self_energy(q)?;
    Ok(if e == 0.0 {
        Lifetime::Infinite
    } else {
        Lifetime::Finite { seconds: HBAR / e }
    })
}

/// Absorptive heating `α I` against a radiative loss `κ_rad (T⁶ − T_env⁶)`,
/// both per unit volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatBalanceModel {
    /// 1/m.
    pub absorption_coefficient: f64,
    /// W/(m³·K⁶).
    pub radiative_constant: f64,
    pub environment_temperature: f64,
}

impl HeatBalanceModel {
    fn validate(&self) -> Result<()> {
        if !(self.absorption_coefficient >= 0.0 && self.absorption_coefficient.is_finite()) {
            return Err(Error::validation("absorption_coefficient must be >= 0"));
        }
        check_positive("radiative_constant", self.radiative_constant)?;
        check_positive("environment_temperature", self.environment_temperature)
    }

    pub fn with_absorption(mut self, alpha: f64) -> Self {
        self.absorption_coefficient = alpha;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatAnchor {
    /// W/m².
    pub intensity: f64,
    pub absorption_coefficient: f64,
    pub balance_temperature: f64,
    pub environment_temperature: f64,
}

impl HeatAnchor {
    /// 165 W/mm² absorbed at 0.03 /cm balancing at 500 K against a 300 K room.
    pub const REFERENCE: HeatAnchor = HeatAnchor {
        intensity: 1.65e8,
        absorption_coefficient: 3.0,
        balance_temperature: 500.0,
        environment_temperature: 300.0,
    };
}

/// `κ_rad = α I / (T_b⁶ − T_env⁶)`.
pub fn calibrate_radiative_constant(anchor: &HeatAnchor) -> Result<f64> {
    check_positive("intensity", anchor.intensity)?;
    check_positive("absorption_coefficient", anchor.absorption_coefficient)?;
    check_positive("environment_temperature", anchor.environment_temperature)?;
    if !(anchor.balance_temperature > anchor.environment_temperature) {
        return Err(Error::validation(format!(
            "balance temperature {} K must exceed the environment temperature {} K",
            anchor.balance_temperature, anchor.environment_temperature
        )));
    }
    Ok(anchor.absorption_coefficient * anchor.intensity
        / (anchor.balance_temperature.powi(6) - anchor.environment_temperature.powi(6)))
}

/// Internal temperature where absorption and emission balance. The volume
/// cancels, so `particle` only needs to be valid. The sixth-power law has
/// the closed-form root `T = (T_env⁶ + α I/κ_rad)^{1/6}`.
pub fn internal_temperature_balance(
    intensity: f64,
    particle: &ParticleSpec,
    model: &HeatBalanceModel,
) -> Result<f64> {
    particle.validate()?;
    model.validate()?;
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return Err(Error::validation("intensity must be >= 0"));
    }
    if intensity == 0.0 || model.absorption_coefficient == 0.0 {
        return Ok(model.environment_temperature);
    }
    let t6 = model.environment_temperature.powi(6)
        + model.absorption_coefficient * intensity / model.radiative_constant;
    Ok(t6.powf(1.0 / 6.0))
}

/// Net heating power per unit volume at temperature `t`, W/m³.
pub fn net_heating(intensity: f64, t: f64, model: &HeatBalanceModel) -> f64 {
    model.absorption_coefficient * intensity
        - model.radiative_constant * (t.powi(6) - model.environment_temperature.powi(6))
}

/// One line of the batch interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum BatchQuery {
    GasDecoherenceRate(GasDecoherenceQuery),
    MinPressure {
        interferometer_time: f64,
        radius: f64,
        gas_molecule_mass: f64,
        environment_temperature: f64,
        #[serde(default = "default_budget")]
        budget: f64,
    },
    DpOverlapFactor {
        lambda: f64,
    },
    DpSelfEnergy(DpQuery),
    DpLifetime(DpQuery),
    HeatBalance {
        intensity: f64,
        #[serde(flatten)]
        model: HeatBalanceModel,
    },
    CalibrateRadiativeConstant(HeatAnchor),
}

fn default_budget() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub input: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub provenance: String,
}

pub fn evaluate(query: &BatchQuery) -> Result<(serde_json::Value, &'static str)> {
    use serde_json::json;
    Ok(match query {
        BatchQuery::GasDecoherenceRate(q) => (
            json!({ "rate_per_s": gas_decoherence_rate(q)? }),
            PROVENANCE_FORMULA,
        ),
        BatchQuery::MinPressure {
            interferometer_time,
            radius,
            gas_molecule_mass,
            environment_temperature,
            budget,
        } => {
            let p = min_pressure(
                *interferometer_time,
                *radius,
                *gas_molecule_mass,
                *environment_temperature,
                *budget,
            )?;
            (
                json!({ "pressure_pa": p, "pressure_mbar": pa_to_mbar(p) }),
                PROVENANCE_FORMULA,
            )
        }
        BatchQuery::DpOverlapFactor { lambda } => (
            json!({ "f": dp_overlap_factor(*lambda)? }),
            PROVENANCE_FORMULA,
        ),
        BatchQuery::DpSelfEnergy(q) => (
            json!({ "energy_j": dp_self_energy(q)? }),
            PROVENANCE_FORMULA,
        ),
        BatchQuery::DpLifetime(q) => (
            json!({ "lifetime": dp_lifetime(q)?, "energy_j": dp_self_energy(q)? }),
            PROVENANCE_FORMULA,
        ),
        BatchQuery::HeatBalance { intensity, model } => {
            // a unit sphere: the volume cancels
            let p = ParticleSpec::from_radius_density(1.0, 1.0, 0.0)?;
            (
                json!({ "temperature_k": internal_temperature_balance(*intensity, &p, model)? }),
                PROVENANCE_CALIBRATED,
            )
        }
        BatchQuery::CalibrateRadiativeConstant(a) => (
            json!({ "radiative_constant": calibrate_radiative_constant(a)? }),
            PROVENANCE_CALIBRATED,
        ),
    })
}

/// Reads one JSON query per line and writes one JSON record per line with
/// the input echoed. Malformed lines produce an error record; the count of
/// failed lines is returned.
pub fn run_batch<R: BufRead, W: Write>(reader: R, mut writer: W) -> Result<usize> {
    let mut failures = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let input: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                failures += 1;
                let rec = BatchRecord {
                    input: serde_json::Value::String(line.clone()),
                    result: None,
                    error: Some(format!("invalid JSON: {e}")),
                    provenance: PROVENANCE_FORMULA.into(),
                };
                writeln!(writer, "{}", serde_json::to_string(&rec)?)?;
                continue;
            }
        };
        let rec = match serde_json::from_value::<BatchQuery>(input.clone()) {
            Err(e) => {
                failures += 1;
                BatchRecord {
                    input,
                    result: None,
                    error: Some(format!("invalid query: {e}")),
                    provenance: PROVENANCE_FORMULA.into(),
                }
            }
            Ok(q) => match evaluate(&q) {
                Ok((result, prov)) => BatchRecord {
                    input,
                    result: Some(result),
                    error: None,
                    provenance: prov.into(),
                },
                Err(e) => {
                    failures += 1;
                    BatchRecord {
                        input,
                        result: None,
                        error: Some(e.to_string()),
                        provenance: PROVENANCE_FORMULA.into(),
                    }
                }
            },
        };
        writeln!(writer, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(failures)
}
