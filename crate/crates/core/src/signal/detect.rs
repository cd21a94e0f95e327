use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VoltageTrace;
use crate::dynamics::{derive_seed, NoDrive, SimOptions, SimTrajectory, Simulation};
use crate::error::{Error, Result};
use crate::params::{Axis, Environment, ParticleSpec, TrapConfig};

/// Motion-to-voltage detection chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Volts per metre on each axis (`1/S`).
    pub conversion: [f64; 3],
    /// One-sided white noise level in V²/Hz.
    pub noise_floor: f64,
    /// `crosstalk[i][j]` mixes axis `j` into channel `i`.
    pub crosstalk: [[f64; 3]; 3],
    /// Quadratic detector term `β₂`, in 1/V.
    pub quadratic: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            conversion: [1e5; 3],
            noise_floor: 0.0,
            crosstalk: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            quadratic: 0.0,
        }
    }
}

impl DetectionConfig {
    pub fn with_noise_floor(mut self, noise_floor: f64) -> Self {
        self.noise_floor = noise_floor;
        self
    }

    pub fn with_conversion(mut self, conversion: [f64; 3]) -> Self {
        self.conversion = conversion;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::validation("detection.noise_floor must be >= 0"));
        }
        if self
            .conversion
            .iter()
            .any(|c| !(c.is_finite() && *c >= 0.0))
        {
            return Err(Error::validation(
                "detection.conversion must be finite and >= 0",
            ));
        }
        if self.crosstalk.iter().flatten().any(|x| !x.is_finite()) || !self.quadratic.is_finite() {
            return Err(Error::validation(
                "detection crosstalk/quadratic must be finite",
            ));
        }
        Ok(())
    }

    /// Noise-free channel voltages for a displacement.
    pub fn linear_signal(&self, u: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, row) in self.crosstalk.iter().enumerate() {
            let lin: f64 = (0..3).map(|j| row[j] * self.conversion[j] * u[j]).sum();
            out[i] = lin + self.quadratic * lin * lin;
        }
        out
    }
}

/// Detector sampled at a fixed rate, with its own noise stream.
pub struct Detector {
    cfg: DetectionConfig,
    noise_rms: f64,
    rng: ChaCha8Rng,
}

impl Detector {
    pub fn new(cfg: DetectionConfig, sample_rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Detector {
            cfg,
            // one-sided level N over a bandwidth fs/2
            noise_rms: (cfg.noise_floor * sample_rate / 2.0).sqrt(),
            rng,
        }
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.cfg
    }

    pub fn sample(&mut self, u: &[f64; 3]) -> [f64; 3] {
        let mut v = self.cfg.linear_signal(u);
        if self.noise_rms > 0.0 {
            for x in &mut v {
                let g: f64 = StandardNormal.sample(&mut self.rng);
                *x += self.noise_rms * g;
            }
        }
        v
    }

    /// Samples only channel `axis`; cheaper inside the feedback loop.
    pub fn sample_channel(&mut self, u: &[f64; 3], axis: Axis) -> f64 {
        let i = axis.index();
        let row = &self.cfg.crosstalk[i];
        let lin: f64 = (0..3).map(|j| row[j] * self.cfg.conversion[j] * u[j]).sum();
        let mut v = lin + self.cfg.quadratic * lin * lin;
        if self.noise_rms > 0.0 {
            let g: f64 = StandardNormal.sample(&mut self.rng);
            v += self.noise_rms * g;
        }
        v
    }
}

/// A detector running at the integration rate whose output is averaged over
/// blocks of `every` samples. Averaging keeps the one-sided noise level at
/// the configured floor at the reduced rate.
pub struct DecimatingDetector {
    detector: Detector,
    axis: Axis,
    every: usize,
    acc: f64,
    filled: usize,
    pub samples: Vec<f64>,
}

impl DecimatingDetector {
    pub fn new(
        cfg: DetectionConfig,
        axis: Axis,
        sample_rate: f64,
        every: usize,
        seed: u64,
    ) -> Self {
        DecimatingDetector {
            detector: Detector::new(cfg, sample_rate, seed),
            axis,
            every: every.max(1),
            acc: 0.0,
            filled: 0,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, u: &[f64; 3]) {
        self.acc += self.detector.sample_channel(u, self.axis);
        self.filled += 1;
        if self.filled == self.every {
            self.samples.push(self.acc / self.every as f64);
            self.acc = 0.0;
            self.filled = 0;
        }
    }

    pub fn into_trace(self, sample_rate: f64) -> VoltageTrace {
        VoltageTrace::new(
            sample_rate / self.every as f64,
            self.samples,
            self.axis.label(),
        )
    }
}

impl crate::dynamics::Observer for DecimatingDetector {
    fn observe(&mut self, _: u64, _: f64, u: &[f64; 3], _: &[f64; 3], _: f64) {
        self.push(u);
    }
}

/// Converts a recorded trajectory into one voltage trace per detector channel.
pub fn transduce(
    traj: &SimTrajectory,
    det: &DetectionConfig,
    seed: u64,
) -> Result<[VoltageTrace; 3]> {
    det.validate()?;
    let mut detector = Detector::new(*det, traj.sample_rate, seed);
    let n = traj.len();
    let mut out = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for k in 0..n {
        let u = [
            traj.positions[0][k],
            traj.positions[1][k],
            traj.positions[2][k],
        ];
        let v = detector.sample(&u);
        for i in 0..3 {
            out[i].push(v[i]);
        }
    }
    let [x, y, z] = out;
    Ok([
        VoltageTrace::new(traj.sample_rate, x, "x"),
        VoltageTrace::new(traj.sample_rate, y, "y"),
        VoltageTrace::new(traj.sample_rate, z, "z"),
    ])
}

/// Integrates a free run and returns the boxcar-averaged detector signal of
/// `axis` at the recorded rate, without storing the trajectory.
pub fn record_detector(
    particle: &ParticleSpec,
    trap: &TrapConfig,
    env: &Environment,
    det: &DetectionConfig,
    axis: Axis,
    opts: &SimOptions,
) -> Result<VoltageTrace> {
    det.validate()?;
    let sim = Simulation::new(particle, trap, env, *opts)?;
    let mut d = DecimatingDetector::new(
        *det,
        axis,
        opts.sample_rate,
        opts.record_every,
        derive_seed(opts.seed, 2),
    );
    let summary = sim.run(&mut NoDrive, &mut d);
    if summary.escaped {
        return Err(Error::NonConvergence(format!(
            "particle escaped after {:.3e} s",
            summary.escape_time.unwrap_or(0.0)
        )));
    }
    Ok(d.into_trace(opts.sample_rate))
}
