//! Closed-form Paul trap mathematics.
//!
//! Per axis the motion obeys the Mathieu equation
//! `ü + (Ω²/4)(a + 2q cos Ωt) u = 0`. With `τ = Ωt/2` this is the canonical
//! form `u'' + (a + 2q cos 2τ) u = 0`, whose stable solutions oscillate at the
//! secular frequency `ω = βΩ/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParticleSpec, TrapConfig};

/// Largest |q| on the a = 0 line that is still stable (first zone).
pub const Q_STABILITY_LIMIT: f64 = 0.908;

/// Depth of the truncated continued fractions in [`beta_exact`].
const CONTINUED_FRACTION_DEPTH: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathieuPoint {
    pub a: [f64; 3],
    pub q: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaModel {
    /// `β² ≈ a + q²/2`.
    #[default]
    Approx,
    /// Continued-fraction characteristic exponent.
    Exact,
}

impl std::str::FromStr for BetaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approx" => Ok(BetaModel::Approx),
            "exact" => Ok(BetaModel::Exact),
            other => Err(Error::validation(format!("unknown beta model '{other}'"))),
        }
    }
}

/// Axial q for a given charge-to-mass ratio and drive amplitude.
pub fn q_axial(charge_to_mass: f64, trap: &TrapConfig, v0: f64) -> f64 {
    4.0 * charge_to_mass * trap.geometric_efficiency * v0
        / (trap.characteristic_distance.powi(2) * trap.drive_frequency.powi(2))
}

/// Splits an axial parameter into the three axes. The radial pair shares
/// `-p_z` unevenly according to the asymmetry, so the sum stays zero.
fn split_axes(p_z: f64, eps: f64) -> [f64; 3] {
    [-(1.0 + eps) * p_z / 2.0, -(1.0 - eps) * p_z / 2.0, p_z]
}

pub fn mathieu_parameters(particle: &ParticleSpec, trap: &TrapConfig) -> MathieuPoint {
    mathieu_parameters_at(particle.charge_to_mass(), trap, trap.drive_amplitude)
}

/// Mathieu point with an overridden drive amplitude, for voltage scans.
pub fn mathieu_parameters_at(charge_to_mass: f64, trap: &TrapConfig, v0: f64) -> MathieuPoint {
    let q_z = q_axial(charge_to_mass, trap, v0);
    let a_z = 8.0 * charge_to_mass * trap.dc_efficiency * trap.dc_voltage
        / (trap.characteristic_distance.powi(2) * trap.drive_frequency.powi(2));
    let eps = trap.radial_asymmetry;
    MathieuPoint {
        a: split_axes(a_z, eps),
        q: split_axes(q_z, eps),
    }
}

/// Lower edge of the first stability zone, `a₀(q)` (β = 0), as a power series.
pub fn zone_lower_edge(q: f64) -> f64 {
    let q2 = q * q;
    -q2 / 2.0 + 7.0 * q2 * q2 / 128.0 - 29.0 * q2 * q2 * q2 / 2304.0
}

/// Upper edge of the first stability zone, `b₁(q)` (β = 1), as a power series.
pub fn zone_upper_edge(q: f64) -> f64 {
    let q = q.abs();
    1.0 - q - q * q / 8.0 + q.powi(3) / 64.0 - q.powi(4) / 1536.0
}

/// Default stability test: |q| ≤ 0.908 on every axis and `a` between the
/// first-zone edges. The q = 0.908 boundary counts as stable.
pub fn is_stable(mp: &MathieuPoint) -> bool {
    (0..3).all(|i| {
        let (a, q) = (mp.a[i], mp.q[i].abs());
        q <= Q_STABILITY_LIMIT && a >= zone_lower_edge(q) && a <= zone_upper_edge(q)
    })
}

/// Stability decided by whether the characteristic exponent exists.
pub fn is_stable_with(mp: &MathieuPoint, model: BetaModel) -> bool {
    match model {
        BetaModel::Approx => is_stable(mp),
        BetaModel::Exact => (0..3).all(|i| beta_exact(mp.a[i], mp.q[i]).is_ok()),
    }
}

pub fn beta_approx(a: f64, q: f64) -> Result<f64> {
    let b2 = a + q * q / 2.0;
    if b2 < 0.0 {
        return Err(Error::Domain(format!(
            "a + q²/2 = {b2:e} < 0: no real secular frequency"
        )));
    }
    Ok(b2.sqrt())
}

/// Residual of the characteristic equation
/// `a − β² − r₁(β) − l₁(β) = 0`, where the continued fractions
/// `r_n = q²/(a − (2n+β)² − r_{n+1})` and `l_n = q²/(a − (2n−β)² − l_{n+1})`
/// are the coefficient ratios of the Floquet series.
fn characteristic_residual(a: f64, q: f64, beta: f64) -> f64 {
    let q2 = q * q;
    let mut r = 0.0;
    let mut l = 0.0;
    for n in (1..=CONTINUED_FRACTION_DEPTH).rev() {
        let two_n = 2.0 * n as f64;
        r = q2 / (a - (two_n + beta).powi(2) - r);
        l = q2 / (a - (two_n - beta).powi(2) - l);
    }
    a - beta * beta - r - l
}

/// Characteristic exponent β ∈ [0, 1] of the first stability zone.
pub fn beta_exact(a: f64, q: f64) -> Result<f64> {
    if q == 0.0 {
        return if (0.0..=1.0).contains(&a) {
            Ok(a.sqrt())
        } else {
            Err(Error::NonConvergence(format!(
                "a = {a} outside the first zone"
            )))
        };
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut f_lo = characteristic_residual(a, q, lo);
    let f_hi = characteristic_residual(a, q, hi);
    if f_lo == 0.0 {
        return Ok(0.0);
    }
    if f_hi == 0.0 {
        return Ok(1.0);
    }
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NonConvergence(format!(
            "(a, q) = ({a}, {q}) lies outside the first stability zone"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = characteristic_residual(a, q, mid);
        if !f_mid.is_finite() {
            return Err(Error::NonConvergence(format!(
                "continued fraction diverged at β = {mid}"
            )));
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn beta(a: f64, q: f64, model: BetaModel) -> Result<f64> {
    match model {
        BetaModel::Approx => beta_approx(a, q),
        BetaModel::Exact => beta_exact(a, q),
    }
}

/// Secular angular frequencies `ω_i = β_i Ω/2` for all three axes.
pub fn secular_frequencies(mp: &MathieuPoint, omega: f64, model: BetaModel) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = beta(mp.a[i], mp.q[i], model)? * omega / 2.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParticleSpec;
    use std::f64::consts::PI;

    fn trap_100k(v0: f64) -> TrapConfig {
        TrapConfig::new(v0, 2.0 * PI * 1e5)
    }

    #[test]
    fn q_z_reference_point() {
        let q = q_axial(75.0, &trap_100k(300.0), 300.0);
        assert!((q - 0.7295).abs() < 1e-4, "{q}");
    }

    #[test]
    fn uncharged_particle_has_no_trap() {
        let p = ParticleSpec::from_radius_density(91e-9, 3040.0, 0.0).unwrap();
        let mp = mathieu_parameters(&p, &trap_100k(300.0));
        assert!(mp.q.iter().all(|&q| q == 0.0));
        assert!(mp.a.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn doubling_drive_frequency_quarters_q() {
        let t1 = trap_100k(300.0);
        let mut t2 = t1;
        t2.drive_frequency *= 2.0;
        let r = q_axial(75.0, &t1, 300.0) / q_axial(75.0, &t2, 300.0);
        assert!((r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_constraint_with_asymmetry() {
        let mut t = trap_100k(200.0).with_asymmetry(0.1);
        t.dc_voltage = 1.0;
        let mp = mathieu_parameters_at(75.0, &t, 200.0);
        assert!(mp.q.iter().sum::<f64>().abs() < 1e-15);
        assert!(mp.a.iter().sum::<f64>().abs() < 1e-15);
        assert!((mp.q[0] + 1.1 * mp.q[2] / 2.0).abs() < 1e-15);
        assert!((mp.q[1] + 0.9 * mp.q[2] / 2.0).abs() < 1e-15);
    }

    #[test]
    fn stability_examples() {
        let at = |q_z: f64| MathieuPoint {
            a: [0.0; 3],
            q: [-q_z / 2.0, -q_z / 2.0, q_z],
        };
        assert!(is_stable(&at(0.4)));
        assert!(!is_stable(&at(0.95)));
        assert!(is_stable(&at(0.908)));
        assert!(!is_stable(&at(0.9081)));
    }

    #[test]
    fn beta_approx_examples() {
        assert!((beta_approx(0.0, 0.2).unwrap() - 0.141_421_356_237).abs() < 1e-12);
        assert_eq!(beta_approx(0.0, 0.0).unwrap(), 0.0);
        assert!((beta_approx(0.01, 0.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(beta_approx(-0.1, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_exact_rejects_unstable_points() {
        assert!(beta_exact(0.0, 0.95).is_err());
        assert!(beta_exact(-0.2, 0.3).is_err());
        assert!(beta_exact(0.5, 0.8).is_err());
    }

    #[test]
    fn beta_exact_pure_dc() {
        assert!((beta_exact(0.25, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn secular_ratio_and_split() {
        let mp = MathieuPoint {
            a: [0.0; 3],
            q: [-0.1, -0.1, 0.2],
        };
        let w = secular_frequencies(&mp, 1.0, BetaModel::Approx).unwrap();
        assert!((w[2] - 0.0707107).abs() < 1e-6);
        assert!((w[2] / w[0] - 2.0).abs() < 1e-12);

        let t = trap_100k(100.0).with_asymmetry(0.05);
        let mp = mathieu_parameters_at(75.0, &t, 100.0);
        let w = secular_frequencies(&mp, t.drive_frequency, BetaModel::Approx).unwrap();
        assert!((w[0] / w[1] - 1.05 / 0.95).abs() < 1e-12);
    }

    #[test]
    fn reference_controller_frequency() {
        // q_z back-solved so the approximate axial frequency is 6.168 kHz.
        let omega = 2.0 * PI * 1e5;
        let q_z = 2.0 * 2f64.sqrt() * 6.168e3 / 1e5;
        let mp = MathieuPoint {
            a: [0.0; 3],
            q: [-q_z / 2.0, -q_z / 2.0, q_z],
        };
        let f_z = secular_frequencies(&mp, omega, BetaModel::Approx).unwrap()[2] / (2.0 * PI);
        assert!((f_z - 6.168e3).abs() < 1e-6);
        assert!((q_z - 0.1744).abs() < 1e-4);
    }
}
