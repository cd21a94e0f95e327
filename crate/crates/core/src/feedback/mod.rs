//! IQ-demodulation cold damping.
//!
//! The controller is a narrow band-pass around the mode frequency with an
//! adjustable output phase, as realised on an FPGA lock-in: the detector
//! signal is AC-coupled, mixed down to baseband, low-passed, rotated by the
//! demodulation phase and mixed back up. At 270° the output follows the
//! negative velocity of the mode and damps it.

mod cool;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::params::Axis;
use crate::signal::{fit_lorentzian_with, numeric_area, FitOptions, Psd};

pub use cool::{
    calibration_run, closed_loop_cool, gain_sweep, CoolingOptions, CoolingRun, FeedbackActuator,
    GainSweepPoint, SweepTemplate,
};

/// Controller settings. Field names follow the lock-in parameters
/// `frequency, bandwidth, gain, phase, acbandwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqFeedbackConfig {
    /// Demodulation frequency in Hz.
    pub center_frequency: f64,
    /// Full bandwidth in Hz; each quadrature is low-passed at half of it.
    pub filter_bandwidth: f64,
    pub gain: f64,
    /// Degrees in [0, 360).
    pub demodulation_phase: f64,
    /// High-pass corner in Hz; 0 disables AC coupling.
    pub ac_coupling_bandwidth: f64,
    pub target_axis: Axis,
    /// Samples between measurement and applied output.
    pub loop_delay: usize,
    /// Output saturation in volts.
    pub max_output: f64,
}

impl Default for IqFeedbackConfig {
    fn default() -> Self {
        IqFeedbackConfig {
            center_frequency: 6.168e3,
            filter_bandwidth: 200.0,
            gain: 12.0,
            demodulation_phase: 270.0,
            ac_coupling_bandwidth: 150.0,
            target_axis: Axis::Y,
            loop_delay: 1,
            max_output: 1.0,
        }
    }
}

impl IqFeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_frequency > 0.0 && self.center_frequency.is_finite()) {
            return Err(Error::validation("feedback.frequency must be > 0"));
        }
        if !(self.filter_bandwidth > 0.0 && self.filter_bandwidth.is_finite()) {
            return Err(Error::validation("feedback.bandwidth must be > 0"));
        }
        if !(self.ac_coupling_bandwidth >= 0.0 && self.ac_coupling_bandwidth.is_finite()) {
            return Err(Error::validation("feedback.acbandwidth must be >= 0"));
        }
        if !(0.0..360.0).contains(&self.demodulation_phase) {
            return Err(Error::validation(format!(
                "feedback.phase must lie in [0, 360), got {}",
                self.demodulation_phase
            )));
        }
        if !self.gain.is_finite() {
            return Err(Error::validation("feedback.gain must be finite"));
        }
        if !(self.max_output > 0.0) {
            return Err(Error::validation("feedback.max_output must be > 0"));
        }
        Ok(())
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_phase(mut self, degrees: f64) -> Self {
        self.demodulation_phase = degrees.rem_euclid(360.0);
        self
    }
}

fn one_pole_coefficient(corner_hz: f64, sample_rate: f64) -> f64 {
    1.0 - (-2.0 * PI * corner_hz / sample_rate).exp()
}

/// Streaming IQ filter state. Call [`IqFilter::step`] once per sample, in order.
#[derive(Debug, Clone)]
pub struct IqFilter {
    cfg: IqFeedbackConfig,
    sample_rate: f64,
    alpha_hp: f64,
    alpha_lp: f64,
    rotation: Complex64,
    advance: Complex64,
    hp_state: f64,
    z: Complex64,
    oscillator: Complex64,
    n: u64,
}

impl IqFilter {
    pub fn new(cfg: IqFeedbackConfig, sample_rate: f64) -> Result<Self> {
        cfg.validate()?;
        if !(sample_rate >= 20.0 * cfg.center_frequency) {
            return Err(Error::validation(format!(
                "controller rate {sample_rate} Hz must be at least 20x the {} Hz centre frequency",
                cfg.center_frequency
            )));
        }
        Ok(IqFilter {
            cfg,
            sample_rate,
            alpha_hp: one_pole_coefficient(cfg.ac_coupling_bandwidth, sample_rate),
            alpha_lp: one_pole_coefficient(cfg.filter_bandwidth / 2.0, sample_rate),
            rotation: Complex64::from_polar(1.0, cfg.demodulation_phase.to_radians()),
            advance: Complex64::from_polar(1.0, 2.0 * PI * cfg.center_frequency / sample_rate),
            hp_state: 0.0,
            z: Complex64::new(0.0, 0.0),
            oscillator: Complex64::new(1.0, 0.0),
            n: 0,
        })
    }

    pub fn config(&self) -> &IqFeedbackConfig {
        &self.cfg
    }

    /// Filter output before saturation.
    pub fn step_linear(&mut self, x: f64) -> f64 {
        let y = x - self.hp_state;
        self.hp_state += self.alpha_hp * y;
        let d = 2.0 * y * self.oscillator.conj();
        self.z += self.alpha_lp * (d - self.z);
        let out = self.cfg.gain * (self.rotation * self.z * self.oscillator).re;
        self.oscillator *= self.advance;
        self.n += 1;
        if self.n % 1024 == 0 {
            self.oscillator /= self.oscillator.norm();
        }
        out
    }

    /// One sample in, one clamped sample out.
    pub fn step(&mut self, x: f64) -> f64 {
        let m = self.cfg.max_output;
        self.step_linear(x).clamp(-m, m)
    }

    /// Baseband complex amplitude `z`.
    pub fn baseband(&self) -> Complex64 {
        self.z
    }

    /// Steady-state complex gain at `frequency` Hz for a real sinusoidal input.
    pub fn frequency_response(&self, frequency: f64) -> Complex64 {
        frequency_response(&self.cfg, self.sample_rate, frequency)
    }
}

/// Applies one sample to `state`; the streaming form of the controller.
pub fn iq_step(input: f64, state: &mut IqFilter) -> f64 {
    state.step(input)
}

/// Analytic response of the discrete filter chain to `cos(2πft)`,
/// `g H_hp(f) [e^{iφ} L(f − f_c) + e^{−iφ} L̄(−f − f_c)]`. The second term is
/// the low-passed image of the negative-frequency half, which the up-mixing
/// returns to `f`.
pub fn frequency_response(cfg: &IqFeedbackConfig, sample_rate: f64, frequency: f64) -> Complex64 {
    let dt = 1.0 / sample_rate;
    let zinv = |f: f64| Complex64::from_polar(1.0, -2.0 * PI * f * dt);
    let a_hp = one_pole_coefficient(cfg.ac_coupling_bandwidth, sample_rate);
    let a_lp = one_pole_coefficient(cfg.filter_bandwidth / 2.0, sample_rate);
    let one = Complex64::new(1.0, 0.0);
    let h_hp = (one - zinv(frequency)) / (one - (1.0 - a_hp) * zinv(frequency));
    let l = |f: f64| a_lp / (one - (1.0 - a_lp) * zinv(f));
    let rot = Complex64::from_polar(1.0, cfg.demodulation_phase.to_radians());
    let direct = rot * l(frequency - cfg.center_frequency);
    let image = rot.conj() * l(-frequency - cfg.center_frequency).conj();
    cfg.gain * h_hp * (direct + image)
}

/// Response including the loop delay.
pub fn loop_response(cfg: &IqFeedbackConfig, sample_rate: f64, frequency: f64) -> Complex64 {
    let delay = Complex64::from_polar(
        1.0,
        -2.0 * PI * frequency * cfg.loop_delay as f64 / sample_rate,
    );
    frequency_response(cfg, sample_rate, frequency) * delay
}

/// Feedback energy damping rate `γ_fb = −κ c Im G(ω) / (m ω)` for a mode at
/// angular frequency `omega`, with `c` the detector gain in V/m and `κ` the
/// electrode coupling in N/V. Negative values mean anti-damping.
pub fn predicted_feedback_damping(
    cfg: &IqFeedbackConfig,
    sample_rate: f64,
    coupling: f64,
    conversion: f64,
    mass: f64,
    omega: f64,
) -> f64 {
    let g = loop_response(cfg, sample_rate, omega / (2.0 * PI));
    -coupling * conversion * g.im / (mass * omega)
}

/// Demodulation phase in degrees that maximises damping, given the loop
/// delay and the filter's own phase at the mode frequency.
pub fn optimal_phase(cfg: &IqFeedbackConfig, sample_rate: f64, mode_frequency: f64) -> f64 {
    let probe = IqFeedbackConfig {
        demodulation_phase: 0.0,
        gain: 1.0,
        ..*cfg
    };
    let g = loop_response(&probe, sample_rate, mode_frequency);
    (-90.0 - g.arg().to_degrees()).rem_euclid(360.0)
}

/// Gain that gives the requested feedback damping according to the analytic response.
pub fn gain_for_damping(
    cfg: &IqFeedbackConfig,
    sample_rate: f64,
    coupling: f64,
    conversion: f64,
    mass: f64,
    omega: f64,
    gamma_fb: f64,
) -> f64 {
    let unit = predicted_feedback_damping(
        &cfg.with_gain(1.0),
        sample_rate,
        coupling,
        conversion,
        mass,
        omega,
    );
    gamma_fb / unit
}

/// Cold-damping temperature `T₀ γ / (γ + γ_fb)`.
pub fn cold_damping_temperature(t0: f64, gamma: f64, gamma_fb: f64) -> f64 {
    t0 * gamma / (gamma + gamma_fb)
}

/// Steady-state temperature including the detection noise fed back onto the
/// particle: `(γ T₀ + b γ_fb²)/(γ + γ_fb)` with `b = m ω² ν/(4 k_B)` and
/// `ν = N/c²` the displacement-equivalent noise in m²/Hz.
pub fn noise_limited_temperature(
    t0: f64,
    gamma: f64,
    gamma_fb: f64,
    mass: f64,
    omega: f64,
    noise_floor: f64,
    conversion: f64,
) -> f64 {
    let nu = noise_floor / (conversion * conversion);
    let b = mass * omega * omega * nu / (4.0 * BOLTZMANN);
    (gamma * t0 + b * gamma_fb * gamma_fb) / (gamma + gamma_fb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTemperature {
    pub temperature: f64,
    pub uncertainty: f64,
    pub mode: String,
    pub method: String,
    /// Fitted area of the cooled line, V².
    pub cooled_area: f64,
    /// Summed area of the cooled line above the fitted floor, V².
    pub cooled_area_numeric: f64,
    pub calibration_area: f64,
}

/// `T_cal · A_cooled / A_cal`.
pub fn area_ratio_temperature(
    cooled_area: f64,
    calibration_area: f64,
    calibration_temperature: f64,
) -> f64 {
    calibration_temperature * cooled_area / calibration_area
}

/// Area-ratio thermometry against a calibration spectrum taken at a known
/// temperature. The uncertainty is the disagreement between the fitted and
/// the summed cooled area, scaled the same way.
pub fn mode_temperature(
    cooled: &Psd,
    calibration: &Psd,
    calibration_temperature: f64,
    window: (f64, f64),
    mode: &str,
) -> Result<ModeTemperature> {
    let (low, high) = window;
    let opts = FitOptions {
        multi_peak_check: false,
        ..FitOptions::default()
    };
    let not_found = |_| Error::ModeNotFound { low, high };
    let fc = fit_lorentzian_with(cooled, low, high, &opts).map_err(not_found)?;
    let fk = fit_lorentzian_with(calibration, low, high, &opts).map_err(not_found)?;
    let a_num = numeric_area(cooled, low, high, fc.offset);
    let t = area_ratio_temperature(fc.area, fk.area, calibration_temperature);
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::ModeNotFound { low, high });
    }
    Ok(ModeTemperature {
        temperature: t,
        uncertainty: (a_num - fc.area).abs() / fk.area * calibration_temperature,
        mode: mode.to_string(),
        method: "area-ratio".into(),
        cooled_area: fc.area,
        cooled_area_numeric: a_num,
        calibration_area: fk.area,
    })
}
