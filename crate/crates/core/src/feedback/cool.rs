use std::collections::VecDeque;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    mode_temperature, noise_limited_temperature, predicted_feedback_damping, IqFeedbackConfig,
    IqFilter, ModeTemperature,
};
use crate::dynamics::{
    derive_seed, Actuator, Recorder, RunSummary, SecularThermometer, SimOptions, SimTrajectory,
    Simulation,
};
use crate::error::{Error, Result};
use crate::params::{Axis, Environment, ParticleSpec, TrapConfig};
use crate::signal::{
    record_detector, welch_psd, DecimatingDetector, DetectionConfig, Detector, Psd, VoltageTrace,
    WelchConfig,
};

/// Electrode driven by the IQ controller from an in-loop detector.
pub struct FeedbackActuator {
    filter: IqFilter,
    detector: Detector,
    axis: Axis,
    delay: usize,
    queue: VecDeque<f64>,
    every: usize,
    acc_in: f64,
    acc_out: f64,
    filled: usize,
    pub detector_samples: Vec<f64>,
    pub feedback_samples: Vec<f64>,
}

impl FeedbackActuator {
    /// `record_every` sets the block length of the boxcar-averaged traces.
    pub fn new(
        cfg: IqFeedbackConfig,
        det: DetectionConfig,
        sample_rate: f64,
        record_every: usize,
        seed: u64,
    ) -> Result<Self> {
        det.validate()?;
        Ok(FeedbackActuator {
            filter: IqFilter::new(cfg, sample_rate)?,
            detector: Detector::new(det, sample_rate, seed),
            axis: cfg.target_axis,
            delay: cfg.loop_delay,
            queue: VecDeque::from(vec![0.0; cfg.loop_delay]),
            every: record_every.max(1),
            acc_in: 0.0,
            acc_out: 0.0,
            filled: 0,
            detector_samples: Vec::new(),
            feedback_samples: Vec::new(),
        })
    }
}

impl Actuator for FeedbackActuator {
    fn voltage(&mut self, _: u64, _: f64, u: &[f64; 3], _: &[f64; 3]) -> f64 {
        let x = self.detector.sample_channel(u, self.axis);
        let out = self.filter.step(x);
        let applied = if self.delay == 0 {
            out
        } else {
            self.queue.push_back(out);
            self.queue.pop_front().unwrap_or(0.0)
        };
        self.acc_in += x;
        self.acc_out += applied;
        self.filled += 1;
        if self.filled == self.every {
            let k = self.every as f64;
            self.detector_samples.push(self.acc_in / k);
            self.feedback_samples.push(self.acc_out / k);
            self.acc_in = 0.0;
            self.acc_out = 0.0;
            self.filled = 0;
        }
        applied
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingOptions {
    pub sim: SimOptions,
    /// Seconds discarded before the true temperature is accumulated.
    pub settle: f64,
    pub record_trajectory: bool,
    /// Independent detector for thermometry, outside the loop.
    pub out_of_loop: Option<DetectionConfig>,
}

impl CoolingOptions {
    pub fn new(sim: SimOptions) -> Self {
        CoolingOptions {
            sim,
            settle: 0.0,
            record_trajectory: true,
            out_of_loop: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoolingRun {
    pub trajectory: Option<SimTrajectory>,
    /// In-loop detector signal, averaged down to the recorded rate.
    pub detector_trace: VoltageTrace,
    pub out_of_loop_trace: Option<VoltageTrace>,
    /// Applied electrode voltage at the recorded rate.
    pub feedback_trace: VoltageTrace,
    /// Secular-mode temperature of the target axis from the simulated motion.
    pub true_temperature: f64,
    /// Mode energy grew above ten times the bath temperature, or the particle escaped.
    pub heating: bool,
    pub gamma: f64,
    pub predicted_gamma_fb: f64,
    /// Secular angular frequency of the target mode.
    pub mode_omega: f64,
    pub summary: RunSummary,
}

fn target_omega(sim: &Simulation<'_>, axis: Axis) -> Result<f64> {
    sim.secular_frequencies()
        .map(|w| w[axis.index()])
        .filter(|w| *w > 0.0)
        .ok_or_else(|| Error::Domain("target mode has no secular frequency".into()))
}

/// Runs the particle with the IQ controller closing the loop on `cfg.target_axis`.
pub fn closed_loop_cool(
    particle: &ParticleSpec,
    trap: &TrapConfig,
    env: &Environment,
    det: &DetectionConfig,
    cfg: &IqFeedbackConfig,
    opts: &CoolingOptions,
) -> Result<CoolingRun> {
    let sim = Simulation::new(particle, trap, env, opts.sim)?;
    let axis = cfg.target_axis;
    let omega = target_omega(&sim, axis)?;
    if (omega / (2.0 * std::f64::consts::PI) - cfg.center_frequency).abs()
        > 2.0 * cfg.filter_bandwidth
    {
        return Err(Error::validation(format!(
            "feedback.frequency {} Hz is more than two bandwidths from the {} mode at {:.1} Hz",
            cfg.center_frequency,
            axis,
            omega / (2.0 * std::f64::consts::PI)
        )));
    }
    let fs = opts.sim.sample_rate;
    let every = opts.sim.record_every;
    let seed = opts.sim.seed;
    let mut actuator = FeedbackActuator::new(*cfg, *det, fs, every, derive_seed(seed, 1))?;
    let recorder = if opts.record_trajectory {
        Some(Recorder::new(&opts.sim)?)
    } else {
        None
    };
    let thermometer = SecularThermometer::new(&sim, axis, omega, opts.settle);
    let ool = match &opts.out_of_loop {
        Some(d) => {
            d.validate()?;
            Some(DecimatingDetector::new(
                *d,
                axis,
                fs,
                every,
                derive_seed(seed, 2),
            ))
        }
        None => None,
    };
    let mut observer = ((recorder, thermometer), ool);
    let summary = sim.run(&mut actuator, &mut observer);
    let ((recorder, thermometer), ool) = observer;

    let t_true = thermometer.temperature();
    let i = axis.index();
    let conversion = det.conversion[i] * det.crosstalk[i][i];
    let gamma_fb = predicted_feedback_damping(
        cfg,
        fs,
        trap.electrode_coupling[i],
        conversion,
        particle.mass,
        omega,
    );
    let heating = summary.escaped || !(t_true <= 10.0 * env.gas_temperature);
    let rate = opts.sim.recorded_rate();
    Ok(CoolingRun {
        trajectory: recorder.map(|r| SimTrajectory::from_recorder(r, &sim, &summary)),
        detector_trace: VoltageTrace::new(rate, actuator.detector_samples, axis.label()),
        out_of_loop_trace: ool.map(|d| d.into_trace(fs)),
        feedback_trace: VoltageTrace::new(rate, actuator.feedback_samples, "feedback"),
        true_temperature: t_true,
        heating,
        gamma: summary.gamma,
        predicted_gamma_fb: gamma_fb,
        mode_omega: omega,
        summary,
    })
}

/// Free run without feedback, returning the detector trace of `axis` at the
/// recorded rate. Taken at a pressure where the mode is in equilibrium with
/// the gas, it provides the reference spectrum for area-ratio thermometry.
pub fn calibration_run(
    particle: &ParticleSpec,
    trap: &TrapConfig,
    env: &Environment,
    det: &DetectionConfig,
    axis: Axis,
    opts: &SimOptions,
) -> Result<VoltageTrace> {
    record_detector(particle, trap, env, det, axis, opts)
}

/// Everything needed to repeat a cooling run at different gains.
#[derive(Debug, Clone)]
pub struct SweepTemplate {
    pub particle: ParticleSpec,
    pub trap: TrapConfig,
    pub env: Environment,
    pub detection: DetectionConfig,
    pub feedback: IqFeedbackConfig,
    pub options: CoolingOptions,
    /// Reference spectrum and its temperature; without it only the true
    /// temperature is reported.
    pub calibration: Option<(Psd, f64)>,
    pub welch: WelchConfig,
    /// Half width of the thermometry window around the mode, Hz.
    pub window_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSweepPoint {
    pub gain: f64,
    pub predicted_gamma_fb: f64,
    /// Noise-limited cold-damping prediction.
    pub predicted_temperature: f64,
    pub true_temperature: f64,
    pub mode_temperature: Option<ModeTemperature>,
    pub heating: bool,
}

fn sweep_point(t: &SweepTemplate, gain: f64, index: usize) -> Result<GainSweepPoint> {
    let mut opts = t.options;
    opts.record_trajectory = false;
    opts.sim.seed = derive_seed(t.options.sim.seed, index as u64);
    let cfg = t.feedback.with_gain(gain);
    let run = closed_loop_cool(&t.particle, &t.trap, &t.env, &t.detection, &cfg, &opts)?;
    let i = cfg.target_axis.index();
    let conversion = t.detection.conversion[i] * t.detection.crosstalk[i][i];
    let predicted = noise_limited_temperature(
        t.env.gas_temperature,
        run.gamma,
        run.predicted_gamma_fb,
        t.particle.mass,
        run.mode_omega,
        t.detection.noise_floor,
        conversion,
    );
    let mode_temperature = match &t.calibration {
        Some((cal, t_cal)) if !run.heating => {
            let trace = run
                .out_of_loop_trace
                .as_ref()
                .unwrap_or(&run.detector_trace)
                .skip(opts.settle);
            let psd = welch_psd(&trace, &t.welch)?;
            let f0 = run.mode_omega / (2.0 * std::f64::consts::PI);
            let w = (f0 - t.window_half_width, f0 + t.window_half_width);
            Some(mode_temperature(
                &psd,
                cal,
                *t_cal,
                w,
                cfg.target_axis.label(),
            )?)
        }
        _ => None,
    };
    Ok(GainSweepPoint {
        gain,
        predicted_gamma_fb: run.predicted_gamma_fb,
        predicted_temperature: predicted,
        true_temperature: run.true_temperature,
        mode_temperature,
        heating: run.heating,
    })
}

/// One closed-loop run per gain, in input order. Run `i` uses the seed
/// derived from the template seed and `i`, so results do not depend on
/// scheduling.
pub fn gain_sweep(template: &SweepTemplate, gains: &[f64]) -> Result<Vec<GainSweepPoint>> {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<GainSweepPoint>> = gains
        .par_iter()
        .enumerate()
        .map(|(i, &g)| sweep_point(template, g, i))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<GainSweepPoint>> = gains
        .iter()
        .enumerate()
        .map(|(i, &g)| sweep_point(template, g, i))
        .collect();
    results.into_iter().collect()
}
