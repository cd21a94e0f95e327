use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use levitrap::config::{load_config, Config};
use levitrap::dynamics::{derive_seed, SimOptions};
use levitrap::feedback::{
    calibration_run, closed_loop_cool, cold_damping_temperature, gain_for_damping, gain_sweep, mode_temperature,
    noise_limited_temperature, optimal_phase, CoolingOptions, GainSweepPoint, IqFeedbackConfig,
    ModeTemperature, SweepTemplate,
};
use levitrap::signal::{welch_psd, Psd, WelchConfig};
use levitrap::Result;
use serde::Serialize;

use super::{invalid, secular_hz};
use crate::output::{compare, RunDir};
use crate::CoolArgs;

const REFERENCE_MINIMUM: &str = "570 ± 100 mK";

enum Sweep {
    Gain(Vec<f64>),
    Damping(Vec<f64>),
    Phase(Vec<f64>),
}

fn parse_sweep(s: &str) -> Result<Sweep> {
    let (key, list) = s
        .split_once('=')
        .ok_or_else(|| invalid(format!("--sweep expects key=list, got '{s}'")))?;
    let values = list
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| invalid(format!("--sweep {key}: {e}")))?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("--sweep needs finite values"));
    }
    match key.trim() {
        "gain" => Ok(Sweep::Gain(values)),
        "damping" => Ok(Sweep::Damping(values)),
        "phase" => Ok(Sweep::Phase(values)),
        k => Err(invalid(format!("--sweep key must be gain, damping or phase, got '{k}'"))),
    }
}

/// Controller from the config and flags; `--tune` centres it on the mode.
fn controller(cfg: &Config, a: &CoolArgs) -> Result<IqFeedbackConfig> {
    let mut fb = cfg.feedback.unwrap_or_default();
    if let Some(g) = a.gain {
        fb.gain = g;
    }
    if let Some(p) = a.phase {
        if !(0.0..360.0).contains(&p) {
            return Err(invalid(format!("--phase must lie in [0, 360), got {p}")));
        }
        fb.demodulation_phase = p;
    }
    let axis = fb.target_axis;
    if cfg.trap.electrode_coupling[axis.index()] == 0.0 {
        return Err(invalid(format!(
            "trap.electrode_coupling is zero on the feedback axis {axis}"
        )));
    }
    if a.tune {
        fb.center_frequency = secular_hz(&cfg.particle, &cfg.trap, axis)?;
        if a.phase.is_none() {
            fb.demodulation_phase = optimal_phase(&fb, cfg.sample_rate(), fb.center_frequency);
        }
    }
    if let Some(d) = a.damping {
        fb.gain = gain_for(cfg, &fb, d)?;
    }
    fb.validate()?;
    Ok(fb)
}

/// Gain giving feedback damping `gamma_fb` on the target mode.
fn gain_for(cfg: &Config, fb: &IqFeedbackConfig, gamma_fb: f64) -> Result<f64> {
    let i = fb.target_axis.index();
    let omega = 2.0 * PI * secular_hz(&cfg.particle, &cfg.trap, fb.target_axis)?;
    let g = gain_for_damping(
        fb,
        cfg.sample_rate(),
        cfg.trap.electrode_coupling[i],
        cfg.detection.conversion[i] * cfg.detection.crosstalk[i][i],
        cfg.particle.mass,
        omega,
        gamma_fb,
    );
    if g.is_finite() {
        Ok(g)
    } else {
        Err(invalid("the controller has no response at the mode frequency"))
    }
}

#[derive(Serialize)]
struct CoolReport {
    controller: IqFeedbackConfig,
    mode_frequency_hz: f64,
    gamma_per_s: f64,
    predicted_gamma_fb_per_s: f64,
    bath_temperature: f64,
    true_temperature: f64,
    cold_damping_temperature: f64,
    noise_limited_temperature: f64,
    mode_temperature: Option<ModeTemperature>,
    heating: bool,
    escaped: bool,
}

#[derive(Serialize)]
struct SweepRun<'a> {
    key: &'a str,
    value: f64,
    #[serde(flatten)]
    point: &'a GainSweepPoint,
}

pub fn cool(out: &Path, a: &CoolArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let fb = controller(&cfg, a)?;
    let sweep = a.sweep.as_deref().map(parse_sweep).transpose()?;
    let seed = a.seed.unwrap_or(cfg.sim.seed);
    let duration = a.duration.unwrap_or(cfg.sim.duration);
    if !(duration > a.settle) || !(a.settle >= 0.0) {
        return Err(invalid("--duration must exceed --settle"));
    }
    if !(a.bin_width > 0.0) || !(a.window > 0.0) || !(a.calibration_pressure_mbar > 0.0) {
        return Err(invalid("--bin-width, --window and --calibration-pressure-mbar must be > 0"));
    }
    let fs = cfg.sample_rate();
    let sim = SimOptions::new(duration, fs, seed).record_every(cfg.sim.record_every);
    let welch = WelchConfig::for_bin_width(sim.recorded_rate(), a.bin_width);
    let mut opts = CoolingOptions::new(sim);
    opts.settle = a.settle;
    opts.record_trajectory = false;
    if a.thermometry {
        opts.out_of_loop = Some(cfg.detection);
    }

    let mut run = RunDir::create(out, "cool", Some(&a.config), seed)?;
    run.detail("controller", fb)?;

    let calibration = if a.thermometry {
        let env = cfg.env.with_pressure(a.calibration_pressure_mbar * 100.0);
        let cal_opts = SimOptions::new(a.calibration_duration, fs, derive_seed(seed, 1000))
            .record_every(cfg.sim.record_every);
        let trace = calibration_run(&cfg.particle, &cfg.trap, &env, &cfg.detection, fb.target_axis, &cal_opts)?
            .skip(0.05);
        let psd = welch_psd(&trace, &welch)?;
        run.csv("calibration_psd.csv", |w| psd.write_csv(w))?;
        Some((psd, env.gas_temperature))
    } else {
        None
    };

    match sweep {
        None => single(&mut run, &cfg, fb, &opts, &welch, calibration.as_ref(), a.window)?,
        Some(s) => {
            let template = SweepTemplate {
                particle: cfg.particle,
                trap: cfg.trap,
                env: cfg.env,
                detection: cfg.detection,
                feedback: fb,
                options: opts,
                calibration,
                welch,
                window_half_width: a.window,
            };
            let (key, values, points) = match s {
                Sweep::Gain(g) => {
                    let points = gain_sweep(&template, &g)?;
                    ("gain", g, points)
                }
                Sweep::Damping(d) => {
                    let gains = d.iter().map(|&x| gain_for(&cfg, &fb, x)).collect::<Result<Vec<_>>>()?;
                    ("damping", d, gain_sweep(&template, &gains)?)
                }
                Sweep::Phase(p) => {
                    let mut points = Vec::with_capacity(p.len());
                    for (i, &phase) in p.iter().enumerate() {
                        let mut t = template.clone();
                        t.feedback = fb.with_phase(phase);
                        t.options.sim.seed = derive_seed(seed, i as u64);
                        points.extend(gain_sweep(&t, &[fb.gain])?);
                    }
                    ("phase", p, points)
                }
            };
            write_sweep(&mut run, key, &values, &points)?;
        }
    }
    run.finish("ok")
}

fn single(
    run: &mut RunDir,
    cfg: &Config,
    fb: IqFeedbackConfig,
    opts: &CoolingOptions,
    welch: &WelchConfig,
    calibration: Option<&(Psd, f64)>,
    window: f64,
) -> Result<()> {
    let r = closed_loop_cool(&cfg.particle, &cfg.trap, &cfg.env, &cfg.detection, &fb, opts)?;
    let trace = r.out_of_loop_trace.as_ref().unwrap_or(&r.detector_trace).skip(opts.settle);
    let psd = welch_psd(&trace, welch)?;
    run.csv("psd.csv", |w| psd.write_csv(w))?;

    let f0 = r.mode_omega / (2.0 * PI);
    let mode = match calibration {
        Some((cal, t_cal)) if !r.heating => Some(mode_temperature(
            &psd,
            cal,
            *t_cal,
            (f0 - window, f0 + window),
            fb.target_axis.label(),
        )?),
        _ => None,
    };
    let i = fb.target_axis.index();
    let conversion = cfg.detection.conversion[i] * cfg.detection.crosstalk[i][i];
    let t0 = cfg.env.gas_temperature;
    let report = CoolReport {
        controller: fb,
        mode_frequency_hz: f0,
        gamma_per_s: r.gamma,
        predicted_gamma_fb_per_s: r.predicted_gamma_fb,
        bath_temperature: t0,
        true_temperature: r.true_temperature,
        cold_damping_temperature: cold_damping_temperature(t0, r.gamma, r.predicted_gamma_fb),
        noise_limited_temperature: noise_limited_temperature(
            t0,
            r.gamma,
            r.predicted_gamma_fb,
            cfg.particle.mass,
            r.mode_omega,
            cfg.detection.noise_floor,
            conversion,
        ),
        mode_temperature: mode,
        heating: r.heating,
        escaped: r.summary.escaped,
    };
    run.json("cool.json", &report)?;
    println!(
        "{} mode at {f0:.1} Hz: gamma = {:.4} 1/s, gamma_fb = {:.4} 1/s, true T = {:.4} K",
        fb.target_axis, r.gamma, r.predicted_gamma_fb, r.true_temperature
    );
    match &report.mode_temperature {
        Some(m) => compare(
            "mode temperature",
            format!("{:.0} ± {:.0} mK", m.temperature * 1e3, m.uncertainty * 1e3),
            REFERENCE_MINIMUM,
        ),
        None => compare(
            "mode temperature",
            format!("{:.0} mK", r.true_temperature * 1e3),
            REFERENCE_MINIMUM,
        ),
    }
    if r.heating {
        println!("mode heated above ten times the bath temperature");
    }
    Ok(())
}

fn write_sweep(run: &mut RunDir, key: &str, values: &[f64], points: &[GainSweepPoint]) -> Result<()> {
    for (i, (v, p)) in values.iter().zip(points).enumerate() {
        let record = SweepRun {
            key,
            value: *v,
            point: p,
        };
        run.json(&format!("sweep/run_{i:03}.json"), &record)?;
    }
    run.csv("sweep.csv", |w: &mut dyn Write| {
        writeln!(
            w,
            "{key},gain,predicted_gamma_fb_per_s,predicted_temperature_k,true_temperature_k,mode_temperature_k,mode_temperature_error_k,heating"
        )?;
        for (v, p) in values.iter().zip(points) {
            let (t, dt) = p
                .mode_temperature
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |m| (m.temperature, m.uncertainty));
            writeln!(
                w,
                "{v:e},{:e},{:e},{:e},{:e},{t:e},{dt:e},{}",
                p.gain, p.predicted_gamma_fb, p.predicted_temperature, p.true_temperature, p.heating
            )?;
        }
        Ok(())
    })?;
    let best = points
        .iter()
        .filter(|p| !p.heating)
        .map(|p| p.mode_temperature.as_ref().map_or(p.true_temperature, |m| m.temperature))
        .fold(f64::INFINITY, f64::min);
    for (v, p) in values.iter().zip(points) {
        println!(
            "{key} = {v}: true T = {:.4} K, predicted {:.4} K{}",
            p.true_temperature,
            p.predicted_temperature,
            if p.heating { ", heating" } else { "" }
        );
    }
    compare("lowest temperature", format!("{:.0} mK", best * 1e3), REFERENCE_MINIMUM);
    Ok(())
}
