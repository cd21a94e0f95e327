use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::Path;

use levitrap::constants::N2_MOLECULE_MASS;
use levitrap::decohere::{
    calibrate_radiative_constant, dp_lifetime, dp_overlap_factor, dp_self_energy, gas_decoherence_rate,
    internal_temperature_balance, min_pressure, pa_to_mbar, run_batch, DpQuery, GasDecoherenceQuery,
    HeatAnchor, HeatBalanceModel, Lifetime,
};
use levitrap::{ParticleSpec, Result};
use serde::Serialize;

use super::{invalid, log_grid};
use crate::output::{compare, RunDir};
use crate::{DecohereArgs, HeatBalanceArgs};

#[derive(Serialize)]
struct DpReport {
    query: DpQuery,
    lambda: f64,
    overlap_factor: f64,
    self_energy_j: f64,
    lifetime: Lifetime,
}

#[derive(Serialize)]
struct GasReport {
    radius: f64,
    environment_temperature: f64,
    gas_molecule_mass: f64,
    interferometer_time: f64,
    budget: f64,
    min_pressure_pa: f64,
    min_pressure_mbar: f64,
    rate_per_s: Option<f64>,
}

#[derive(Serialize, Default)]
struct DecohereReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    dp: Option<DpReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gas: Option<GasReport>,
}

pub fn decohere(out: &Path, a: &DecohereArgs) -> Result<()> {
    if let Some(path) = &a.batch {
        return batch(out, path);
    }
    if !a.dp && !a.gas {
        return Err(invalid("choose --dp, --gas or --batch"));
    }
    let mut run = RunDir::create(out, "decohere", None, 0)?;
    let mut report = DecohereReport::default();

    if a.dp {
        let (mass, sep) = match (a.mass, a.sep) {
            (Some(m), Some(s)) => (m, s),
            _ => return Err(invalid("--dp needs --mass and --sep")),
        };
        let query = match a.radius {
            Some(r) => DpQuery {
                mass,
                radius: r,
                separation: sep,
            },
            None => DpQuery::from_density(mass, a.density, sep)?,
        };
        let lambda = sep / (2.0 * query.radius);
        let lifetime = dp_lifetime(&query)?;
        let dp = DpReport {
            query,
            lambda,
            overlap_factor: dp_overlap_factor(lambda)?,
            self_energy_j: dp_self_energy(&query)?,
            lifetime,
        };
        run.csv("dp_lifetime.csv", |w: &mut dyn Write| {
            writeln!(w, "separation_m,lambda,self_energy_j,lifetime_s")?;
            for d in log_grid(1e-9, 1e-3, 61) {
                let q = DpQuery { separation: d, ..query };
                writeln!(
                    w,
                    "{d:e},{:e},{:e},{:e}",
                    d / (2.0 * q.radius),
                    dp_self_energy(&q)?,
                    dp_lifetime(&q)?.seconds()
                )?;
            }
            Ok(())
        })?;
        compare("DP lifetime", format!("{:.3} s", lifetime.seconds()), "≈ 0.6 s");
        report.dp = Some(dp);
    }

    if a.gas {
        let radius = a.radius.ok_or_else(|| invalid("--gas needs --radius"))?;
        let p_min = min_pressure(a.time, radius, N2_MOLECULE_MASS, a.temperature, a.budget)?;
        let query = |pressure: f64| GasDecoherenceQuery {
            pressure,
            radius,
            gas_molecule_mass: N2_MOLECULE_MASS,
            environment_temperature: a.temperature,
        };
        let rate = a.pressure.map(|p| gas_decoherence_rate(&query(p))).transpose()?;
        run.csv("gas_min_pressure.csv", |w: &mut dyn Write| {
            writeln!(w, "interferometer_time_s,min_pressure_pa,min_pressure_mbar")?;
            for t in log_grid(1e-6, 1.0, 61) {
                let p = min_pressure(t, radius, N2_MOLECULE_MASS, a.temperature, a.budget)?;
                writeln!(w, "{t:e},{p:e},{:e}", pa_to_mbar(p))?;
            }
            Ok(())
        })?;
        compare("minimum pressure", format!("{:.3e} mbar", pa_to_mbar(p_min)), "6e-8 mbar");
        if let Some(r) = rate {
            println!("gas scattering rate at {} Pa: {r:.4e} 1/s", a.pressure.unwrap_or(0.0));
        }
        report.gas = Some(GasReport {
            radius,
            environment_temperature: a.temperature,
            gas_molecule_mass: N2_MOLECULE_MASS,
            interferometer_time: a.time,
            budget: a.budget,
            min_pressure_pa: p_min,
            min_pressure_mbar: pa_to_mbar(p_min),
            rate_per_s: rate,
        });
    }

    run.json("decohere.json", &report)?;
    run.finish("ok")
}

/// JSON lines to standard output. Lines that fail become error records, so
/// the command itself succeeds.
fn batch(out: &Path, path: &Path) -> Result<()> {
    let mut run = RunDir::create(out, "decohere --batch", None, 0)?;
    let stdout = io::stdout();
    let failures = if path == Path::new("-") {
        run_batch(io::stdin().lock(), stdout.lock())?
    } else {
        run_batch(BufReader::new(File::open(path)?), stdout.lock())?
    };
    run.detail("input", path.display().to_string())?;
    run.detail("failed_lines", failures)?;
    if failures > 0 {
        eprintln!("{failures} line(s) failed");
    }
    run.finish("ok")
}

#[derive(Serialize)]
struct HeatPoint {
    intensity_w_per_mm2: f64,
    alpha_per_cm: f64,
    temperature_k: f64,
}

#[derive(Serialize)]
struct HeatReport {
    anchor: HeatAnchor,
    radiative_constant: f64,
    points: Vec<HeatPoint>,
}

pub fn heat_balance(out: &Path, a: &HeatBalanceArgs) -> Result<()> {
    let anchor = HeatAnchor {
        intensity: a.anchor[0] * 1e6,
        absorption_coefficient: a.anchor[1] * 100.0,
        balance_temperature: a.anchor[2],
        environment_temperature: a.anchor[3],
    };
    if a.alpha_per_cm.is_empty() || a.scan_points < 2 {
        return Err(invalid("need at least one --alpha-per-cm and --scan-points >= 2"));
    }
    let kappa = calibrate_radiative_constant(&anchor)?;
    let model = HeatBalanceModel {
        absorption_coefficient: anchor.absorption_coefficient,
        radiative_constant: kappa,
        environment_temperature: anchor.environment_temperature,
    };
    // the volume cancels; any valid particle will do
    let particle = ParticleSpec::nanodiamond(91e-9, 75.0)?;
    let temperature = |i_mm2: f64, alpha_cm: f64| {
        internal_temperature_balance(i_mm2 * 1e6, &particle, &model.with_absorption(alpha_cm * 100.0))
    };

    let mut run = RunDir::create(out, "heat-balance", None, 0)?;
    let mut points = Vec::new();
    for &alpha in &a.alpha_per_cm {
        for &i in &a.intensity {
            points.push(HeatPoint {
                intensity_w_per_mm2: i,
                alpha_per_cm: alpha,
                temperature_k: temperature(i, alpha)?,
            });
        }
    }
    run.csv("heat_balance.csv", |w: &mut dyn Write| {
        write!(w, "intensity_w_per_mm2")?;
        for alpha in &a.alpha_per_cm {
            write!(w, ",temperature_k_alpha_{alpha}_per_cm")?;
        }
        writeln!(w)?;
        for i in log_grid(0.1, 200.0, a.scan_points) {
            write!(w, "{i:e}")?;
            for &alpha in &a.alpha_per_cm {
                write!(w, ",{:e}", temperature(i, alpha)?)?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;

    for p in &points {
        let label = format!("T at {} W/mm^2, {} /cm", p.intensity_w_per_mm2, p.alpha_per_cm);
        let at_anchor = p.intensity_w_per_mm2 == a.anchor[0] && p.alpha_per_cm == a.anchor[1];
        if at_anchor {
            compare(&label, format!("{:.2} K", p.temperature_k), &format!("{} K", a.anchor[2]));
        } else {
            println!("{label:<28} {:.2} K", p.temperature_k);
        }
    }
    run.json(
        "heat_balance.json",
        &HeatReport {
            anchor,
            radiative_constant: kappa,
            points,
        },
    )?;
    run.finish("ok")
}
