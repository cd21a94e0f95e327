//! Parameter extraction: charge-to-mass from a drive-voltage scan, radius and
//! mass from a pressure scan.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{Dyn, OMatrix, OVector, Vector1, U1};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::EPSTEIN_PREFACTOR;
use crate::dynamics::{derive_seed, mean_thermal_speed, SimOptions};
use crate::error::{Error, Result};
use crate::params::{sphere_volume, Axis, Environment, ParticleSpec, TrapConfig};
use crate::signal::{
    find_mode_window, fit_lorentzian, record_detector, welch_psd, DetectionConfig, LorentzianFit,
    WelchConfig,
};
use crate::trap::{beta_exact, q_axial, BetaModel, Q_STABILITY_LIMIT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmFit {
    /// C/kg.
    pub charge_to_mass: f64,
    pub standard_error: f64,
    /// `(V₀ in V, ω_z in rad/s)`.
    pub scan_points: Vec<(f64, f64)>,
    pub model: BetaModel,
    /// Axial q at the largest scanned voltage.
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusFit {
    /// `dγ/dP` in 1/(s·Pa).
    pub slope: f64,
    pub slope_error: f64,
    pub radius: f64,
    pub radius_error: f64,
    pub mass: f64,
    pub assumed_density: f64,
    /// `(P in Pa, γ in 1/s)`.
    pub scan_points: Vec<(f64, f64)>,
    /// False when there are too few points for a meaningful standard error.
    pub reliable: bool,
    /// Free-intercept fit `γ = slope·P + intercept`, for reference only.
    pub free_intercept: Option<FreeIntercept>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeIntercept {
    pub slope: f64,
    pub intercept: f64,
    pub radius: f64,
}

struct QmProblem<'a> {
    points: &'a [(f64, f64)],
    trap: &'a TrapConfig,
    scale: f64,
    p: Vector1<f64>,
}

impl QmProblem<'_> {
    fn predict(&self, qm: f64, v0: f64) -> Option<f64> {
        let q = q_axial(qm, self.trap, v0);
        beta_exact(0.0, q)
            .ok()
            .map(|b| b * self.trap.drive_frequency / 2.0)
    }
}

impl LeastSquaresProblem<f64, Dyn, U1> for QmProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U1>;
    type ParameterStorage = Owned<f64, U1>;

    fn set_params(&mut self, x: &Vector1<f64>) {
        self.p = *x;
    }

    fn params(&self) -> Vector1<f64> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        let qm = self.p[0] * self.scale;
        let r: Option<Vec<f64>> = self
            .points
            .iter()
            .map(|&(v, w)| self.predict(qm, v).map(|m| m - w))
            .collect();
        r.map(|r| OVector::<f64, Dyn>::from_vec(r))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U1>> {
        let qm = self.p[0] * self.scale;
        let h = 1e-7 * qm.abs().max(1e-30);
        let mut j = OMatrix::<f64, Dyn, U1>::zeros(self.points.len());
        for (i, &(v, _)) in self.points.iter().enumerate() {
            let up = self.predict(qm + h, v)?;
            let down = self.predict(qm - h, v)?;
            j[(i, 0)] = (up - down) / (2.0 * h) * self.scale;
        }
        Some(j)
    }
}

/// Fits `ω_z(V₀) = β_z(q_z(V₀)) Ω/2` with `a = 0` to a voltage scan.
pub fn fit_charge_to_mass(
    points: &[(f64, f64)],
    trap: &TrapConfig,
    model: BetaModel,
) -> Result<QmFit> {
    trap.validate()?;
    if trap.dc_voltage != 0.0 {
        return Err(Error::validation(
            "charge-to-mass fit requires a_z = 0 (no DC voltage)",
        ));
    }
    if points.len() < 3 {
        return Err(Error::validation(format!(
            "need at least 3 scan points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(v, w)| !(v > 0.0 && v.is_finite() && w > 0.0 && w.is_finite()))
    {
        return Err(Error::validation(
            "scan voltages and frequencies must be > 0",
        ));
    }
    let v_first = points[0].0;
    if points.iter().all(|&(v, _)| v == v_first) {
        return Err(Error::validation(
            "degenerate scan: all drive voltages are equal",
        ));
    }
    let n = points.len() as f64;
    let omega = trap.drive_frequency;
    let v_max = points.iter().map(|p| p.0).fold(0.0, f64::max);

    // Approximate model: ω = c V₀ through the origin.
    let svv: f64 = points.iter().map(|&(v, _)| v * v).sum();
    let c = points.iter().map(|&(v, w)| v * w).sum::<f64>() / svv;
    let rss: f64 = points.iter().map(|&(v, w)| (w - c * v).powi(2)).sum();
    let to_qm = 2f64.sqrt() * trap.characteristic_distance.powi(2) * omega
        / (2.0 * trap.geometric_efficiency);
    let approx = c * to_qm;
    let approx_se = (rss / (n - 1.0)).sqrt() / svv.sqrt() * to_qm;

    let (qm, se) = match model {
        BetaModel::Approx => (approx, approx_se),
        BetaModel::Exact => {
            if approx <= 0.0 {
                return Err(Error::Domain(
                    "fitted charge-to-mass is not positive".into(),
                ));
            }
            let start = approx.min(0.9 * Q_STABILITY_LIMIT / q_axial(1.0, trap, v_max));
            let problem = QmProblem {
                points,
                trap,
                scale: start,
                p: Vector1::new(1.0),
            };
            let (problem, report) = LevenbergMarquardt::new().minimize(problem);
            if !report.termination.was_successful() {
                return Err(Error::Fit(format!(
                    "exact charge-to-mass fit failed: {:?}",
                    report.termination
                )));
            }
            let qm = problem.p[0] * problem.scale;
            let r = problem
                .residuals()
                .ok_or_else(|| Error::Fit("fit left the stable region".into()))?;
            let j = problem
                .jacobian()
                .ok_or_else(|| Error::Fit("fit left the stable region".into()))?;
            let jtj: f64 = j.iter().map(|x| x * x).sum::<f64>() / (problem.scale * problem.scale);
            let s2 = r.norm_squared() / (n - 1.0);
            (qm, (s2 / jtj).sqrt())
        }
    };
    if !(qm > 0.0) {
        return Err(Error::Domain(format!(
            "fitted charge-to-mass {qm:e} C/kg is not positive"
        )));
    }
    let q_max = q_axial(qm, trap, v_max);
    if q_max > Q_STABILITY_LIMIT {
        return Err(Error::Domain(format!(
            "fit implies q_z = {q_max:.3} > {Q_STABILITY_LIMIT} at {v_max} V: unphysical scan"
        )));
    }
    Ok(QmFit {
        charge_to_mass: qm,
        standard_error: se,
        scan_points: points.to_vec(),
        model,
        q_max,
    })
}

/// Radius whose Epstein damping slope is `slope`: `R = 3 c_E / (4π ρ v̄ slope)`.
pub fn radius_from_slope(slope: f64, density: f64, env: &Environment) -> f64 {
    3.0 * EPSTEIN_PREFACTOR / (4.0 * PI * density * mean_thermal_speed(env) * slope)
}

/// Fits `γ = slope·P` to a pressure scan and inverts the Epstein law for the radius.
pub fn fit_radius(points: &[(f64, f64)], density: f64, env: &Environment) -> Result<RadiusFit> {
    env.validate()?;
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::validation("density must be > 0"));
    }
    if points.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 pressures, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(p, g)| !(p > 0.0 && p.is_finite() && g.is_finite()))
    {
        return Err(Error::validation(
            "pressures must be > 0 and damping rates finite",
        ));
    }
    let n = points.len() as f64;
    let spp: f64 = points.iter().map(|&(p, _)| p * p).sum();
    let slope = points.iter().map(|&(p, g)| p * g).sum::<f64>() / spp;
    if !(slope > 0.0) {
        return Err(Error::Domain(format!(
            "non-positive damping slope {slope:e}"
        )));
    }
    let rss: f64 = points.iter().map(|&(p, g)| (g - slope * p).powi(2)).sum();
    let slope_error = (rss / (n - 1.0)).sqrt() / spp.sqrt();
    let radius = radius_from_slope(slope, density, env);

    let free_intercept = (points.len() >= 3).then(|| {
        let mp = points.iter().map(|p| p.0).sum::<f64>() / n;
        let mg = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|&(p, _)| (p - mp).powi(2)).sum();
        let sxy: f64 = points.iter().map(|&(p, g)| (p - mp) * (g - mg)).sum();
        let s = sxy / sxx;
        FreeIntercept {
            slope: s,
            intercept: mg - s * mp,
            radius: radius_from_slope(s, density, env),
        }
    });

    Ok(RadiusFit {
        slope,
        slope_error,
        radius,
        radius_error: radius * slope_error / slope,
        mass: density * sphere_volume(radius),
        assumed_density: density,
        scan_points: points.to_vec(),
        reliable: points.len() >= 3,
        free_intercept,
    })
}

/// Shared settings of a simulated scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub sim: SimOptions,
    pub welch: WelchConfig,
    pub axis: Axis,
    /// Seconds dropped from the start of each trace.
    pub settle: f64,
    /// Search band for the mode, Hz.
    pub search: (f64, f64),
    /// Fit window half-width in units of the estimated linewidth.
    pub window_widths: f64,
}

/// One simulated spectrum and its line fit.
fn measure(
    particle: &ParticleSpec,
    trap: &TrapConfig,
    env: &Environment,
    det: &DetectionConfig,
    s: &ScanSettings,
    seed: u64,
) -> Result<LorentzianFit> {
    let mut opts = s.sim;
    opts.seed = seed;
    let trace = record_detector(particle, trap, env, det, s.axis, &opts)?.skip(s.settle);
    let psd = welch_psd(&trace, &s.welch)?;
    let (lo, hi) = find_mode_window(&psd, s.search.0, s.search.1, s.window_widths)?;
    fit_lorentzian(&psd, lo, hi)
}

fn par_map<T: Send, F: Fn(usize) -> Result<T> + Sync + Send>(n: usize, f: F) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    let out: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    let out: Vec<Result<T>> = (0..n).map(f).collect();
    out.into_iter().collect()
}

/// Simulates the axial spectrum at each drive voltage and returns
/// `(V₀, ω_z)` pairs from the fitted line centres.
pub fn voltage_scan(
    particle: &ParticleSpec,
    trap: &TrapConfig,
    env: &Environment,
    det: &DetectionConfig,
    voltages: &[f64],
    settings: &ScanSettings,
) -> Result<(Vec<(f64, f64)>, Vec<LorentzianFit>)> {
    let fits = par_map(voltages.len(), |i| {
        let t = trap.with_amplitude(voltages[i]);
        measure(
            particle,
            &t,
            env,
            det,
            settings,
            derive_seed(settings.sim.seed, i as u64),
        )
    })?;
    let points = voltages
        .iter()
        .zip(&fits)
        .map(|(&v, f)| (v, f.omega0()))
        .collect();
    Ok((points, fits))
}

/// Simulates the spectrum at each pressure and returns `(P, γ)` pairs.
pub fn pressure_scan(
    particle: &ParticleSpec,
    trap: &TrapConfig,
    env: &Environment,
    det: &DetectionConfig,
    pressures: &[f64],
    settings: &ScanSettings,
) -> Result<(Vec<(f64, f64)>, Vec<LorentzianFit>)> {
    let fits = par_map(pressures.len(), |i| {
        let e = env.with_pressure(pressures[i]);
        measure(
            particle,
            trap,
            &e,
            det,
            settings,
            derive_seed(settings.sim.seed, i as u64),
        )
    })?;
    let points = pressures
        .iter()
        .zip(&fits)
        .map(|(&p, f)| (p, f.gamma()))
        .collect();
    Ok((points, fits))
}

/// Writes a two-column scan table with the given header.
pub fn write_scan_csv<W: Write>(writer: W, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{},{}", header[0], header[1])?;
    for (a, b) in points {
        writeln!(w, "{a:e},{b:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a two-column scan table, skipping `#` comments and the header line.
pub fn read_scan_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut header = true;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut header) {
            continue;
        }
        let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b))) => out.push((a, b)),
            _ => return Err(Error::Format(format!("bad scan row at line {}", i + 1))),
        }
    }
    Ok(out)
}

pub const VOLTAGE_SCAN_HEADER: [&str; 2] = ["v0_volt", "omega_z_rad_s"];
pub const PRESSURE_SCAN_HEADER: [&str; 2] = ["pressure_pa", "gamma_per_s"];

#[cfg(test)]
mod tests {
    use super::*;

    fn trap() -> TrapConfig {
        TrapConfig::new(100.0, 2.0 * PI * 1e5)
    }

    #[test]
    fn approx_inverts_linear_data() {
        let t = trap();
        let c = 2.5;
        let pts: Vec<_> = [50.0, 80.0, 110.0, 140.0]
            .iter()
            .map(|&v| (v, c * v))
            .collect();
        let fit = fit_charge_to_mass(&pts, &t, BetaModel::Approx).unwrap();
        let expected = c * 2f64.sqrt() * t.characteristic_distance.powi(2) * t.drive_frequency
            / (2.0 * t.geometric_efficiency);
        assert!((fit.charge_to_mass / expected - 1.0).abs() < 1e-12);
        assert!(fit.standard_error < 1e-9 * expected);
    }

    #[test]
    fn exact_recovers_exact_data() {
        let t = trap();
        let pts: Vec<_> = [60.0, 120.0, 180.0, 240.0, 300.0]
            .iter()
            .map(|&v| {
                let q = q_axial(75.0, &t, v);
                (v, beta_exact(0.0, q).unwrap() * t.drive_frequency / 2.0)
            })
            .collect();
        let fit = fit_charge_to_mass(&pts, &t, BetaModel::Exact).unwrap();
        assert!(
            (fit.charge_to_mass - 75.0).abs() < 1e-6,
            "{}",
            fit.charge_to_mass
        );
    }

    #[test]
    fn degenerate_and_unphysical_scans() {
        let t = trap();
        let same = vec![(100.0, 1e4); 3];
        assert!(fit_charge_to_mass(&same, &t, BetaModel::Approx)
            .unwrap_err()
            .is_validation());
        let huge: Vec<_> = [100.0, 200.0, 300.0]
            .iter()
            .map(|&v| (v, 1e3 * v))
            .collect();
        assert!(matches!(
            fit_charge_to_mass(&huge, &t, BetaModel::Approx),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn radius_inversion_round_trip() {
        let env = Environment::nitrogen(1.0);
        let p = ParticleSpec::from_radius_density(91e-9, 3040.0, 1e-15).unwrap();
        let pts: Vec<_> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&pr| {
                (
                    pr,
                    crate::dynamics::epstein_damping(&p, &env.with_pressure(pr)),
                )
            })
            .collect();
        let fit = fit_radius(&pts, 3040.0, &env).unwrap();
        assert!((fit.radius / 91e-9 - 1.0).abs() < 1e-9);
        assert!((fit.mass - p.mass).abs() / p.mass < 1e-8);
        let doubled: Vec<_> = pts.iter().map(|&(p, g)| (p, 2.0 * g)).collect();
        let half = fit_radius(&doubled, 3040.0, &env).unwrap();
        assert!((half.radius / fit.radius - 0.5).abs() < 1e-12);
        let two = fit_radius(&pts[..2], 3040.0, &env).unwrap();
        assert!(!two.reliable);
    }

    #[test]
    fn scan_csv_round_trip() {
        let pts = vec![(1.0, 2.5e3), (3.0, 7.1e-2)];
        let mut buf = Vec::new();
        write_scan_csv(&mut buf, VOLTAGE_SCAN_HEADER, &pts).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("v0_volt,omega_z_rad_s"));
        assert_eq!(read_scan_csv(&buf[..]).unwrap(), pts);
    }
}
