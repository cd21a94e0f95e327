use std::f64::consts::PI;
use std::fs::File;
use std::path::Path;

use levitrap::characterize::{
    fit_charge_to_mass, fit_radius, pressure_scan, read_scan_csv, voltage_scan, write_scan_csv, QmFit,
    RadiusFit, ScanSettings, PRESSURE_SCAN_HEADER, VOLTAGE_SCAN_HEADER,
};
use levitrap::config::load_config;
use levitrap::constants::BOLTZMANN;
use levitrap::dynamics::{epstein_damping, SimOptions};
use levitrap::signal::{DetectionConfig, LorentzianFit, WelchConfig};
use levitrap::trap::{beta_exact, BetaModel};
use levitrap::{Axis, Environment, ParticleSpec, Result, TrapConfig};
use serde::Serialize;

use super::{amplitude_for, display, invalid, operating_trap, secular_hz, DRIVE};
use crate::output::{compare, RunDir};
use crate::{FitMassArgs, FitQmArgs, ModelArg, ScanArgs};

/// Detector whose floor sits `snr_db` under the thermal peak of the weakest line.
fn detector_for(particle: &ParticleSpec, env: &Environment, omega: f64, snr_db: f64) -> DetectionConfig {
    let det = DetectionConfig::default();
    let gamma = epstein_damping(particle, env);
    let c = det.conversion[Axis::Z.index()];
    let var = c * c * BOLTZMANN * env.gas_temperature / (particle.mass * omega * omega);
    // one-sided Lorentzian of FWHM γ/2π holding `var`
    let peak = 4.0 * var / gamma;
    det.with_noise_floor(peak / 10f64.powf(snr_db / 10.0))
}

/// Axial settings with a boxcar detector at 100 kHz.
fn scan_settings(trap: &TrapConfig, duration: f64, seed: u64, bin_width: f64, widths: f64) -> ScanSettings {
    let sim = SimOptions::for_trap(trap, duration, 50.0, seed).record_every(50);
    ScanSettings {
        sim,
        welch: WelchConfig::for_bin_width(sim.recorded_rate(), bin_width),
        axis: Axis::Z,
        settle: 0.02,
        search: (200.0, 20000.0),
        window_widths: widths,
    }
}

fn check_scan(s: &ScanArgs) -> Result<()> {
    match (s.synthetic, &s.scan) {
        (false, None) => Err(invalid("give --scan FILE or --synthetic")),
        _ if s.duration.is_some_and(|d| !(d > 0.0)) => Err(invalid("--duration must be > 0")),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct QmReport {
    source: String,
    true_charge_to_mass: Option<f64>,
    approx: Option<QmFit>,
    exact: Option<QmFit>,
    point_fits: Vec<LorentzianFit>,
}

pub fn fit_qm(out: &Path, a: &FitQmArgs) -> Result<()> {
    check_scan(&a.scan)?;
    let base = match &a.scan.config {
        Some(p) => load_config(p)?.trap,
        None => TrapConfig::new(1.0, DRIVE),
    };
    let mut run = RunDir::create(out, "fit-qm", a.scan.config.as_deref(), a.scan.seed)?;
    let (points, point_fits, source, truth) = if a.scan.synthetic {
        if !(a.qm > 0.0) || a.points < 3 || !(a.q_max > 0.0 && a.q_max < 0.908) || !(a.pressure > 0.0) {
            return Err(invalid("need --qm > 0, --points >= 3, 0 < --q-max < 0.908 and --pressure > 0"));
        }
        let particle = ParticleSpec::nanodiamond(91e-9, a.qm)?;
        let env = Environment::nitrogen(a.pressure);
        let n = (a.points - 1) as f64;
        let qs: Vec<f64> = (0..a.points)
            .map(|k| a.q_max * (1.0 + 2.0 * k as f64 / n) / 3.0)
            .collect();
        let voltages: Vec<f64> = qs.iter().map(|&q| amplitude_for(&base, a.qm, q)).collect();
        let omega_max = beta_exact(0.0, a.q_max)? * base.drive_frequency / 2.0;
        let det = detector_for(&particle, &env, omega_max, a.scan.snr_db);
        // only the centres matter here, so narrow windows and more averages
        let settings = scan_settings(&base, a.scan.duration.unwrap_or(1.0), a.scan.seed, 5.0, 8.0);
        let (pts, fits) = voltage_scan(&particle, &base, &env, &det, &voltages, &settings)?;
        (pts, fits, "synthetic".to_string(), Some(a.qm))
    } else {
        let path = a.scan.scan.as_deref().expect("checked");
        (read_scan_csv(File::open(path)?)?, Vec::new(), display(path), None)
    };
    run.csv("scan.csv", |w| write_scan_csv(w, VOLTAGE_SCAN_HEADER, &points))?;

    let fit = |m: BetaModel| fit_charge_to_mass(&points, &base, m);
    let report = QmReport {
        source,
        true_charge_to_mass: truth,
        approx: matches!(a.model, ModelArg::Approx | ModelArg::Both).then(|| fit(BetaModel::Approx)).transpose()?,
        exact: matches!(a.model, ModelArg::Exact | ModelArg::Both).then(|| fit(BetaModel::Exact)).transpose()?,
        point_fits,
    };
    run.json("qm_fit.json", &report)?;
    for (label, f) in [("Q/m, approximate beta", &report.approx), ("Q/m, exact beta", &report.exact)] {
        if let Some(f) = f {
            compare(
                label,
                format!("{:.3} ± {:.3} C/kg", f.charge_to_mass, f.standard_error),
                "75 C/kg",
            );
        }
    }
    run.finish("ok")
}

#[derive(Serialize)]
struct MassReport {
    source: String,
    true_radius: Option<f64>,
    true_mass: Option<f64>,
    fit: RadiusFit,
    point_fits: Vec<LorentzianFit>,
}

pub fn fit_mass(out: &Path, a: &FitMassArgs) -> Result<()> {
    check_scan(&a.scan)?;
    let cfg = a.scan.config.as_deref().map(load_config).transpose()?;
    let env = cfg.as_ref().map_or(Environment::nitrogen(1.0), |c| c.env);
    let mut run = RunDir::create(out, "fit-mass", a.scan.config.as_deref(), a.scan.seed)?;
    let (points, point_fits, source, truth) = if a.scan.synthetic {
        if a.pressures.len() < 3 || a.pressures.iter().any(|p| !(*p > 0.0)) || !(a.radius > 0.0) {
            return Err(invalid("need at least three positive --pressures and --radius > 0"));
        }
        let particle = ParticleSpec::from_radius_density(a.radius, a.density, 0.0)?.with_charge_to_mass(75.0);
        let trap = match &cfg {
            Some(c) => c.trap,
            None => operating_trap(75.0),
        };
        let highest = a.pressures.iter().copied().fold(0.0, f64::max);
        let omega = 2.0 * PI * secular_hz(&particle, &trap, Axis::Z)?;
        let det = detector_for(&particle, &env.with_pressure(highest), omega, a.scan.snr_db);
        let settings = scan_settings(&trap, a.scan.duration.unwrap_or(10.0), a.scan.seed, 2.0, 20.0);
        let (pts, fits) = pressure_scan(&particle, &trap, &env, &det, &a.pressures, &settings)?;
        (pts, fits, "synthetic".to_string(), Some(particle))
    } else {
        let path = a.scan.scan.as_deref().expect("checked");
        (read_scan_csv(File::open(path)?)?, Vec::new(), display(path), None)
    };
    run.csv("scan.csv", |w| write_scan_csv(w, PRESSURE_SCAN_HEADER, &points))?;

    let fit = fit_radius(&points, a.density, &env)?;
    compare("radius", format!("{:.2} ± {:.2} nm", fit.radius * 1e9, fit.radius_error * 1e9), "91 nm");
    compare("mass", format!("{:.3e} kg", fit.mass), "9.6e-18 kg");
    let report = MassReport {
        source,
        true_radius: truth.map(|p| p.radius),
        true_mass: truth.map(|p| p.mass),
        fit,
        point_fits,
    };
    run.json("mass_fit.json", &report)?;
    run.finish("ok")
}
