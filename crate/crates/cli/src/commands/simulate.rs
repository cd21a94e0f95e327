use std::io::BufWriter;
use std::path::Path;

use levitrap::config::load_config;
use levitrap::constants::BOLTZMANN;
use levitrap::dynamics::{epstein_damping, simulate as integrate, DriveSpec, SimOptions, SimTrajectory};
use levitrap::signal::{find_mode_window, fit_lorentzian, transduce, welch_psd, DetectionConfig, LorentzianFit, WelchConfig};
use levitrap::trap::{is_stable, mathieu_parameters, secular_frequencies, BetaModel, MathieuPoint};
use levitrap::{Axis, Error, Result};
use serde::Serialize;

use super::{invalid, secular_hz};
use crate::output::RunDir;
use crate::{PsdArgs, SimulateArgs};

#[derive(Serialize)]
struct SimulateReport {
    status: &'static str,
    escaped: bool,
    escape_time: Option<f64>,
    duration: f64,
    integration_rate_hz: f64,
    recorded_rate_hz: f64,
    n_samples: usize,
    mathieu: MathieuPoint,
    stable: bool,
    secular_hz_exact: Option<[f64; 3]>,
    secular_hz_approx: Option<[f64; 3]>,
    gamma_per_s: f64,
    mean_square_m2: [f64; 3],
    equipartition_m2: Option<[f64; 3]>,
    ledger_closure: [f64; 3],
}

fn hz(w: [f64; 3]) -> [f64; 3] {
    w.map(|x| x / (2.0 * std::f64::consts::PI))
}

pub fn simulate(out: &Path, a: &SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.sim.seed);
    let duration = a.duration.unwrap_or(cfg.sim.duration);
    if !(duration > 0.0) {
        return Err(invalid("--duration must be > 0"));
    }
    let opts = SimOptions::new(duration, cfg.sample_rate(), seed)
        .record_every(a.record_every.unwrap_or(cfg.sim.record_every));
    let mut run = RunDir::create(out, "simulate", Some(&a.config), seed)?;
    let traj = integrate(&cfg.particle, &cfg.trap, &cfg.env, &DriveSpec::None, &opts)?;
    run.binary("trajectory.bin", |f| traj.write_binary(BufWriter::new(f)))?;
    if a.csv {
        run.csv("trajectory.csv", |w| traj.write_csv(w))?;
    }

    let mp = mathieu_parameters(&cfg.particle, &cfg.trap);
    let stable = is_stable(&mp);
    let exact = secular_frequencies(&mp, cfg.trap.drive_frequency, BetaModel::Exact).ok();
    let approx = secular_frequencies(&mp, cfg.trap.drive_frequency, BetaModel::Approx).ok();
    let m = cfg.particle.mass;
    let t0 = cfg.env.gas_temperature;
    let status = if traj.escaped { "escaped" } else { "bounded" };
    let report = SimulateReport {
        status,
        escaped: traj.escaped,
        escape_time: traj.escape_time,
        duration,
        integration_rate_hz: opts.sample_rate,
        recorded_rate_hz: traj.sample_rate,
        n_samples: traj.len(),
        mathieu: mp,
        stable,
        secular_hz_exact: exact.map(hz),
        secular_hz_approx: approx.map(hz),
        gamma_per_s: epstein_damping(&cfg.particle, &cfg.env),
        mean_square_m2: Axis::ALL.map(|ax| traj.mean_square(ax, 0.0)),
        equipartition_m2: exact.map(|w| w.map(|w| BOLTZMANN * t0 / (m * w * w))),
        ledger_closure: Axis::ALL.map(|ax| traj.ledger.closure(ax)),
    };
    run.json("summary.json", &report)?;
    run.detail("escaped", traj.escaped)?;
    println!("{status}: {} samples at {} Hz", traj.len(), traj.sample_rate);
    if let Some(t) = traj.escape_time {
        println!("escape after {t:.4e} s");
    }
    run.finish(status)
}

#[derive(Serialize)]
struct PsdReport {
    axis: Axis,
    predicted_frequency_hz: f64,
    search_hz: (f64, f64),
    bin_width_hz: f64,
    n_averages: usize,
    total_power_v2: f64,
    fit: Option<LorentzianFit>,
}

pub fn psd(out: &Path, a: &PsdArgs) -> Result<()> {
    if !(a.bin_width > 0.0) || !(a.settle >= 0.0) {
        return Err(invalid("--bin-width must be > 0 and --settle >= 0"));
    }
    let traj = SimTrajectory::load(&a.trajectory)?;
    if traj.escaped {
        return Err(Error::NonConvergence("trajectory ends in an escape".into()));
    }
    let det = match &a.config {
        Some(p) => load_config(p)?.detection,
        None => DetectionConfig::default(),
    };
    let axis = Axis::from(a.axis);
    let mut run = RunDir::create(out, "psd", a.config.as_deref(), a.seed)?;
    run.detail("trajectory", a.trajectory.display().to_string())?;
    let traces = transduce(&traj, &det, a.seed)?;
    let trace = traces[axis.index()].skip(a.settle);
    let psd = welch_psd(&trace, &WelchConfig::for_bin_width(trace.sample_rate, a.bin_width))?;
    run.csv("psd.csv", |w| psd.write_csv(w))?;

    let snap = &traj.config_snapshot;
    let f0 = secular_hz(&snap.particle, &snap.trap, axis)?;
    // the radial pair sits about 10% apart at typical asymmetry
    let search = match axis {
        Axis::Z => (0.75 * f0, 1.25 * f0),
        _ => (0.955 * f0, 1.045 * f0),
    };
    let fit = if a.no_fit {
        None
    } else {
        let (lo, hi) = find_mode_window(&psd, search.0, search.1, 20.0)?;
        Some(fit_lorentzian(&psd, lo, hi)?)
    };
    let report = PsdReport {
        axis,
        predicted_frequency_hz: f0,
        search_hz: search,
        bin_width_hz: psd.bin_width(),
        n_averages: psd.n_averages,
        total_power_v2: psd.total_power(),
        fit,
    };
    run.json("fit.json", &report)?;
    if let Some(f) = &report.fit {
        println!(
            "{axis} mode: f0 = {:.3} Hz, linewidth = {:.4} Hz, area = {:.4e} V^2 (predicted {f0:.3} Hz)",
            f.center_frequency, f.linewidth, f.area
        );
    }
    run.finish("ok")
}
