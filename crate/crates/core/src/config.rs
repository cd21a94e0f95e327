//! Key-value configuration files.
//!
//! ```text
//! # comment
//! particle.radius = 91e-9
//! particle.density = nanodiamond
//! particle.charge_to_mass = 75
//! trap.drive_amplitude_vpp = 600
//! trap.drive_frequency_khz = 100
//! env.pressure_mbar = 1.62e-2
//! feedback.phase_deg = 270
//! ```
//!
//! Each line is `section.key = value`. A unit suffix may be attached to the
//! key or to the number: `_mbar` (×100, to Pa), `_vpp` (×½, to zero-to-peak),
//! `_khz` (×10³, to Hz), `_hz` and `_deg` (no scaling). Trap frequencies are
//! given in Hz and stored as angular frequencies; `trap.drive_angular_frequency`
//! takes rad/s directly. Values are SI otherwise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{density_preset, N2_MOLECULE_MASS, NANODIAMOND_DENSITY};
use crate::error::{Error, Result};
use crate::feedback::IqFeedbackConfig;
use crate::params::{sphere_volume, Axis, Environment, ParticleSpec, StrayDrift, TrapConfig};
use crate::signal::DetectionConfig;
use crate::trap::BetaModel;

/// Simulation controls from the `sim` section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub duration: f64,
    /// Integration rate in Hz; when absent it follows from `steps_per_period`.
    pub sample_rate: Option<f64>,
    pub steps_per_period: f64,
    pub seed: u64,
    pub record_every: usize,
    pub beta_model: BetaModel,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            duration: 1.0,
            sample_rate: None,
            steps_per_period: 50.0,
            seed: 0,
            record_every: 1,
            beta_model: BetaModel::Approx,
        }
    }
}

impl SimSettings {
    pub fn sample_rate_for(&self, trap: &TrapConfig) -> f64 {
        self.sample_rate
            .unwrap_or(self.steps_per_period * trap.drive_frequency_hz())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub particle: ParticleSpec,
    pub trap: TrapConfig,
    pub env: Environment,
    pub detection: DetectionConfig,
    pub feedback: Option<IqFeedbackConfig>,
    pub sim: SimSettings,
    /// Keys that were not given and took their default value.
    pub defaults_used: Vec<String>,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    Config::parse(&text)
}

#[derive(Debug, Clone)]
enum Value {
    Number(f64),
    Word(String),
}

struct Entry {
    line: usize,
    raw: String,
    value: Value,
    used: bool,
}

struct Entries(BTreeMap<String, Entry>);

const SUFFIXES: [(&str, f64); 5] = [
    ("_mbar", 100.0),
    ("_vpp", 0.5),
    ("_khz", 1e3),
    ("_hz", 1.0),
    ("_deg", 1.0),
];

fn strip_suffix(s: &str) -> (&str, f64) {
    for (suf, factor) in SUFFIXES {
        if let Some(base) = s.strip_suffix(suf) {
            return (base, factor);
        }
    }
    (s, 1.0)
}

impl Entries {
    fn parse(text: &str) -> Result<Entries> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected 'section.key = value', got '{content}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let Some((section, name)) = key.split_once('.') else {
                return Err(Error::Parse {
                    line,
                    message: format!("key '{key}' has no section"),
                });
            };
            if section.is_empty() || name.is_empty() || value.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("incomplete entry '{content}'"),
                });
            }
            let (name, key_factor) = strip_suffix(name);
            let (number, value_factor) = strip_suffix(value);
            let value = match number.parse::<f64>() {
                Ok(x) => Value::Number(x * key_factor * value_factor),
                Err(_) => {
                    let word_ok = value.starts_with(|c: char| c.is_ascii_alphabetic())
                        && value
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                    if !word_ok {
                        return Err(Error::Parse {
                            line,
                            message: format!("cannot parse value '{value}'"),
                        });
                    }
                    Value::Word(value.to_string())
                }
            };
            let full = format!("{section}.{name}");
            if map.contains_key(&full) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key '{full}'"),
                });
            }
            map.insert(
                full,
                Entry {
                    line,
                    raw: number.to_string(),
                    value,
                    used: false,
                },
            );
        }
        Ok(Entries(map))
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>> {
        match self.0.get_mut(key) {
            None => Ok(None),
            Some(e) => {
                e.used = true;
                match &e.value {
                    Value::Number(x) => Ok(Some(*x)),
                    Value::Word(w) => Err(Error::Parse {
                        line: e.line,
                        message: format!("'{key}' expects a number, got '{w}'"),
                    }),
                }
            }
        }
    }

    /// Exact integer value; large seeds do not survive a round trip through f64.
    fn integer(&mut self, key: &str) -> Result<Option<u64>> {
        let raw = self.0.get(key).map(|e| e.raw.clone());
        match self.number(key)? {
            None => Ok(None),
            Some(x) => match raw.and_then(|r| r.parse::<u64>().ok()) {
                Some(n) => Ok(Some(n)),
                None => to_count(key, x).map(|n| Some(n as u64)),
            },
        }
    }

    fn word(&mut self, key: &str) -> Option<(usize, String)> {
        self.0.get_mut(key).map(|e| {
            e.used = true;
            let w = match &e.value {
                Value::Number(x) => x.to_string(),
                Value::Word(w) => w.clone(),
            };
            (e.line, w)
        })
    }

    fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.0.keys().any(|k| k.starts_with(&prefix))
    }

    fn finish(self) -> Result<()> {
        match self.0.iter().find(|(_, e)| !e.used) {
            Some((k, e)) => Err(Error::Parse {
                line: e.line,
                message: format!("unknown key '{k}'"),
            }),
            None => Ok(()),
        }
    }
}

fn per_axis(entries: &mut Entries, base: &str, default: f64) -> Result<([f64; 3], bool)> {
    let common = entries.number(base)?;
    let mut out = [common.unwrap_or(default); 3];
    let mut given = common.is_some();
    for axis in Axis::ALL {
        if let Some(v) = entries.number(&format!("{base}_{}", axis.label()))? {
            out[axis.index()] = v;
            given = true;
        }
    }
    Ok((out, given))
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut e = Entries::parse(text)?;
        let mut defaults = Vec::new();
        let mut or_default = |name: &str, v: Option<f64>, d: f64| {
            v.unwrap_or_else(|| {
                defaults.push(name.to_string());
                d
            })
        };

        // particle
        let density = match e.word("particle.density") {
            None => or_default("particle.density", None, NANODIAMOND_DENSITY),
            Some((line, w)) => match w.parse::<f64>() {
                Ok(x) => x,
                Err(_) => density_preset(&w).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unknown density preset '{w}'"),
                })?,
            },
        };
        let radius = e.number("particle.radius")?;
        let mass = e.number("particle.mass")?;
        let mut particle = match (radius, mass) {
            (Some(r), Some(m)) => {
                let p = ParticleSpec {
                    mass: m,
                    radius: r,
                    density,
                    charge: 0.0,
                    absorption_coefficient: 0.0,
                };
                p.validate()?;
                p
            }
            (Some(r), None) => ParticleSpec::from_radius_density(r, density, 0.0)?,
            (None, Some(m)) => ParticleSpec::from_mass_density(m, density, 0.0)?,
            (None, None) => {
                return Err(Error::validation(
                    "particle.radius or particle.mass is required",
                ))
            }
        };
        let charge = e.number("particle.charge")?;
        let qm = e.number("particle.charge_to_mass")?;
        particle.charge = match (charge, qm) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "give either particle.charge or particle.charge_to_mass, not both",
                ))
            }
            (Some(q), None) => q,
            (None, Some(qm)) => qm * particle.mass,
            (None, None) => 0.0,
        };
        if let Some(a) = e.number("particle.absorption_coefficient")? {
            particle.absorption_coefficient = a;
        }
        particle.validate()?;

        // trap
        let v0 = e
            .number("trap.drive_amplitude")?
            .ok_or_else(|| Error::validation("trap.drive_amplitude is required"))?;
        let angular = e.number("trap.drive_angular_frequency")?;
        let hz = e.number("trap.drive_frequency")?;
        let omega = match (angular, hz) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "give trap.drive_frequency or trap.drive_angular_frequency, not both",
                ))
            }
            (Some(w), None) => w,
            (None, Some(f)) => 2.0 * PI * f,
            (None, None) => return Err(Error::validation("trap.drive_frequency is required")),
        };
        let mut trap = TrapConfig::new(v0, omega);
        let eta = e.number("trap.geometric_efficiency")?;
        trap.geometric_efficiency = or_default(
            "trap.geometric_efficiency",
            eta,
            TrapConfig::DEFAULT_EFFICIENCY,
        );
        trap.dc_efficiency = e
            .number("trap.dc_efficiency")?
            .unwrap_or(trap.geometric_efficiency);
        let d = e.number("trap.characteristic_distance")?;
        trap.characteristic_distance = or_default(
            "trap.characteristic_distance",
            d,
            TrapConfig::DEFAULT_DISTANCE,
        );
        trap.dc_voltage = e.number("trap.dc_voltage")?.unwrap_or(0.0);
        trap.radial_asymmetry = e.number("trap.radial_asymmetry")?.unwrap_or(0.0);
        trap.electrode_coupling = per_axis(&mut e, "trap.electrode_coupling", 0.0)?.0;
        trap.validate()?;

        // env
        let pressure = e
            .number("env.pressure")?
            .ok_or_else(|| Error::validation("env.pressure is required"))?;
        let mut env = Environment::nitrogen(pressure);
        env.gas_temperature = or_default(
            "env.gas_temperature",
            e.number("env.gas_temperature")?,
            300.0,
        );
        env.gas_molecule_mass = or_default(
            "env.gas_molecule_mass",
            e.number("env.gas_molecule_mass")?,
            N2_MOLECULE_MASS,
        );
        let (field, field_given) = per_axis(&mut e, "env.stray_field", 0.0)?;
        let decay = e.number("env.stray_decay_time")?;
        let drift = e.number("env.drive_drift")?;
        if field_given || decay.is_some() || drift.is_some() {
            env.stray_drift = Some(StrayDrift {
                initial_field: field,
                decay_time: decay.ok_or_else(|| {
                    Error::validation("env.stray_decay_time is required with a stray drift")
                })?,
                drive_drift: drift.unwrap_or(0.0),
            });
        }
        env.validate()?;

        // detection
        let mut detection = DetectionConfig::default();
        detection.conversion = per_axis(&mut e, "detection.conversion", detection.conversion[0])?.0;
        if let Some(n) = e.number("detection.noise_floor")? {
            detection.noise_floor = n;
        }
        if let Some(b) = e.number("detection.quadratic")? {
            detection.quadratic = b;
        }
        for i in Axis::ALL {
            for j in Axis::ALL {
                if let Some(c) =
                    e.number(&format!("detection.crosstalk_{}{}", i.label(), j.label()))?
                {
                    detection.crosstalk[i.index()][j.index()] = c;
                }
            }
        }
        detection.validate()?;

        // feedback
        let feedback = if e.has_section("feedback") {
            let mut fb = IqFeedbackConfig::default();
            if let Some(x) = e.number("feedback.frequency")? {
                fb.center_frequency = x;
            }
            if let Some(x) = e.number("feedback.bandwidth")? {
                fb.filter_bandwidth = x;
            }
            if let Some(x) = e.number("feedback.gain")? {
                fb.gain = x;
            }
            if let Some(x) = e.number("feedback.phase")? {
                fb.demodulation_phase = x;
            }
            if let Some(x) = e.number("feedback.acbandwidth")? {
                fb.ac_coupling_bandwidth = x;
            }
            if let Some(x) = e.number("feedback.max_output")? {
                fb.max_output = x;
            }
            if let Some(x) = e.number("feedback.loop_delay")? {
                fb.loop_delay = to_count("feedback.loop_delay", x)?;
            }
            if let Some((line, w)) = e.word("feedback.axis") {
                fb.target_axis = w.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("unknown axis '{w}'"),
                })?;
            }
            fb.validate()?;
            Some(fb)
        } else {
            None
        };

        // sim
        let mut sim = SimSettings::default();
        if let Some(x) = e.number("sim.duration")? {
            sim.duration = x;
        }
        sim.sample_rate = e.number("sim.sample_rate")?;
        if let Some(x) = e.number("sim.steps_per_period")? {
            sim.steps_per_period = x;
        }
        if let Some(x) = e.integer("sim.seed")? {
            sim.seed = x;
        }
        if let Some(x) = e.number("sim.record_every")? {
            sim.record_every = to_count("sim.record_every", x)?.max(1);
        }
        if let Some((line, w)) = e.word("sim.beta_model") {
            sim.beta_model = w.parse().map_err(|_| Error::Parse {
                line,
                message: format!("unknown beta model '{w}'"),
            })?;
        }
        if !(sim.duration > 0.0)
            || !(sim.steps_per_period > 0.0)
            || sim.sample_rate.is_some_and(|f| !(f > 0.0))
        {
            return Err(Error::validation(
                "sim.duration, sim.sample_rate and sim.steps_per_period must be > 0",
            ));
        }

        e.finish()?;
        Ok(Config {
            particle,
            trap,
            env,
            detection,
            feedback,
            sim,
            defaults_used: defaults,
        })
    }

    /// Writes the configuration in canonical SI keys. Re-parsing the output
    /// reproduces every field bit for bit.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let p = &self.particle;
        let t = &self.trap;
        let mut put = |k: &str, v: f64| {
            let _ = writeln!(s, "{k} = {v:e}");
        };
        put("particle.mass", p.mass);
        put("particle.radius", p.radius);
        put("particle.density", p.density);
        put("particle.charge", p.charge);
        put("particle.absorption_coefficient", p.absorption_coefficient);
        put("trap.drive_amplitude", t.drive_amplitude);
        put("trap.drive_angular_frequency", t.drive_frequency);
        put("trap.geometric_efficiency", t.geometric_efficiency);
        put("trap.dc_efficiency", t.dc_efficiency);
        put("trap.characteristic_distance", t.characteristic_distance);
        put("trap.dc_voltage", t.dc_voltage);
        put("trap.radial_asymmetry", t.radial_asymmetry);
        for a in Axis::ALL {
            put(
                &format!("trap.electrode_coupling_{a}"),
                t.electrode_coupling[a.index()],
            );
        }
        put("env.pressure", self.env.pressure);
        put("env.gas_temperature", self.env.gas_temperature);
        put("env.gas_molecule_mass", self.env.gas_molecule_mass);
        if let Some(d) = &self.env.stray_drift {
            for a in Axis::ALL {
                put(&format!("env.stray_field_{a}"), d.initial_field[a.index()]);
            }
            put("env.stray_decay_time", d.decay_time);
            put("env.drive_drift", d.drive_drift);
        }
        let det = &self.detection;
        for a in Axis::ALL {
            put(
                &format!("detection.conversion_{a}"),
                det.conversion[a.index()],
            );
        }
        put("detection.noise_floor", det.noise_floor);
        put("detection.quadratic", det.quadratic);
        for i in Axis::ALL {
            for j in Axis::ALL {
                put(
                    &format!("detection.crosstalk_{i}{j}"),
                    det.crosstalk[i.index()][j.index()],
                );
            }
        }
        if let Some(fb) = &self.feedback {
            put("feedback.frequency", fb.center_frequency);
            put("feedback.bandwidth", fb.filter_bandwidth);
            put("feedback.gain", fb.gain);
            put("feedback.phase", fb.demodulation_phase);
            put("feedback.acbandwidth", fb.ac_coupling_bandwidth);
            put("feedback.max_output", fb.max_output);
        }
        put("sim.duration", self.sim.duration);
        if let Some(fs) = self.sim.sample_rate {
            put("sim.sample_rate", fs);
        }
        put("sim.steps_per_period", self.sim.steps_per_period);
        let beta = match self.sim.beta_model {
            BetaModel::Approx => "approx",
            BetaModel::Exact => "exact",
        };
        let _ = writeln!(s, "sim.seed = {}", self.sim.seed);
        let _ = writeln!(s, "sim.record_every = {}", self.sim.record_every);
        let _ = writeln!(s, "sim.beta_model = {beta}");
        if let Some(fb) = &self.feedback {
            let _ = writeln!(s, "feedback.loop_delay = {}", fb.loop_delay);
            let _ = writeln!(s, "feedback.axis = {}", fb.target_axis);
        }
        s
    }

    pub fn sample_rate(&self) -> f64 {
        self.sim.sample_rate_for(&self.trap)
    }

    /// Mass implied by radius and density, for reports.
    pub fn implied_mass(&self) -> f64 {
        self.particle.density * sphere_volume(self.particle.radius)
    }
}

fn to_count(name: &str, x: f64) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 {
        Ok(x as usize)
    } else {
        Err(Error::validation(format!(
            "{name} must be a non-negative integer, got {x}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
particle.radius = 91e-9
particle.density = 3040
particle.charge_to_mass = 75
trap.drive_amplitude = 300
trap.drive_frequency_khz = 100
env.pressure_mbar = 1e-8
";

    #[test]
    fn reference_particle_and_units() {
        let c = Config::parse(BASE).unwrap();
        assert!((c.particle.mass - 9.6e-18).abs() / 9.6e-18 < 0.01);
        assert!((c.particle.charge_to_mass() - 75.0).abs() < 1e-12);
        assert!((c.env.pressure - 1e-6).abs() < 1e-20);
        assert!((c.trap.drive_frequency - 2.0 * PI * 1e5).abs() < 1e-6);
        assert!(c
            .defaults_used
            .contains(&"trap.geometric_efficiency".to_string()));
        assert!(c
            .defaults_used
            .contains(&"trap.characteristic_distance".to_string()));
    }

    #[test]
    fn efficiency_out_of_range() {
        let text = format!("{BASE}trap.geometric_efficiency = 1.5\n");
        let err = Config::parse(&text).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("geometric_efficiency")),
            "{err}"
        );
    }

    #[test]
    fn vpp_suffix_halves() {
        let text = BASE.replace(
            "trap.drive_amplitude = 300",
            "trap.drive_amplitude_vpp = 600",
        );
        assert_eq!(Config::parse(&text).unwrap().trap.drive_amplitude, 300.0);
        let text = BASE.replace(
            "trap.drive_amplitude = 300",
            "trap.drive_amplitude = 600_vpp",
        );
        assert_eq!(Config::parse(&text).unwrap().trap.drive_amplitude, 300.0);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = Config::parse("particle.radius 91e-9\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = Config::parse(&format!("{BASE}trap.bogus = 1\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
        let err = Config::parse(&format!("{BASE}trap.dc_voltage = abc\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn presets_and_feedback_keys() {
        let text = format!(
            "{}feedback.frequency_khz = 6.168\nfeedback.bandwidth = 200\nfeedback.gain = 12\nfeedback.phase_deg = 270\nfeedback.acbandwidth = 150\nfeedback.axis = y\n",
            BASE.replace("3040", "bulk_diamond")
        );
        let c = Config::parse(&text).unwrap();
        assert_eq!(c.particle.density, 3500.0);
        let fb = c.feedback.unwrap();
        assert!((fb.center_frequency - 6168.0).abs() < 1e-9);
        assert_eq!(fb.target_axis, Axis::Y);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = Config::parse(BASE).unwrap();
        let again = Config::parse(&c.serialize()).unwrap();
        assert_eq!(c.particle, again.particle);
        assert_eq!(c.trap, again.trap);
        assert_eq!(c.env, again.env);
        assert_eq!(c.sim, again.sim);
    }
}
