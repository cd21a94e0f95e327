use std::f64::consts::PI;

use levitrap::trap::{
    beta_approx, beta_exact, is_stable, mathieu_parameters, mathieu_parameters_at,
    secular_frequencies, BetaModel, MathieuPoint,
};
use levitrap::{ParticleSpec, TrapConfig};
use proptest::prelude::*;

/// β from the trace of the monodromy matrix of `u'' + (a + 2q cos 2τ) u = 0`
/// over one period τ ∈ [0, π], integrated with RK4.
fn floquet_beta(a: f64, q: f64) -> Option<f64> {
    let n = 20_000;
    let h = PI / n as f64;
    let rhs = |t: f64, y: [f64; 2]| [y[1], -(a + 2.0 * q * (2.0 * t).cos()) * y[0]];
    let mut trace = 0.0;
    for (k, y0) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
        let mut y = y0;
        for i in 0..n {
            let t = i as f64 * h;
            let k1 = rhs(t, y);
            let k2 = rhs(
                t + h / 2.0,
                [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]],
            );
            let k3 = rhs(
                t + h / 2.0,
                [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]],
            );
            let k4 = rhs(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }
        trace += y[k];
    }
    let half = trace / 2.0;
    (half.abs() <= 1.0).then(|| half.acos() / PI)
}

fn reference_trap(v0: f64) -> TrapConfig {
    TrapConfig::new(v0, 2.0 * PI * 1e5)
}

#[test]
fn q_reference_value() {
    let p = ParticleSpec::nanodiamond(91e-9, 75.0).unwrap();
    let mp = mathieu_parameters(&p, &reference_trap(300.0));
    // 4·75·0.8·300 / (0.5e-3² · (2π·1e5)²)
    let expected = 72000.0 / (0.25e-6 * 4.0 * PI * PI * 1e10);
    assert!((mp.q[2] - expected).abs() < 1e-12);
    assert!((mp.q[2] - 0.7295).abs() < 1e-4);
    assert!((mp.q[0] + mp.q[2] / 2.0).abs() < 1e-15);
    let fast = TrapConfig::new(300.0, 4.0 * PI * 1e5);
    assert!((mathieu_parameters(&p, &fast).q[2] * 4.0 - mp.q[2]).abs() < 1e-12);
    let neutral = ParticleSpec { charge: 0.0, ..p };
    assert_eq!(mathieu_parameters(&neutral, &reference_trap(300.0)).q[2], 0.0);
}

#[test]
fn exact_beta_matches_floquet() {
    for &(a, q) in &[
        (0.0, 0.05),
        (0.0, 0.3),
        (0.0, 0.6),
        (0.0, 0.85),
        (0.05, 0.4),
        (-0.02, 0.5),
        (0.1, 0.2),
    ] {
        let oracle = floquet_beta(a, q).unwrap();
        let b = beta_exact(a, q).unwrap();
        assert!((b - oracle).abs() < 1e-6, "a={a} q={q}: {b} vs {oracle}");
    }
    // the exact exponent sits 1.85% above q/√2 at q = 0.3
    let b = beta_exact(0.0, 0.3).unwrap();
    assert!((b - 0.216_059_13).abs() < 1e-7, "{b}");
    assert!((b / beta_approx(0.0, 0.3).unwrap() - 1.0).abs() < 0.02);
}

#[test]
fn exact_beta_at_stability_edge() {
    let oracle = floquet_beta(0.0, 0.908).unwrap();
    let b = beta_exact(0.0, 0.908).unwrap();
    assert!(b > 0.99 && (b - oracle).abs() < 1e-3, "{b} {oracle}");
    assert!(beta_exact(0.0, 0.95).is_err());
    assert!(floquet_beta(0.0, 0.95).is_none());
}

#[test]
fn exact_approaches_approx_for_small_q() {
    let mut last = f64::INFINITY;
    for k in 1..=4 {
        let q = 10f64.powi(-k);
        let rel = ((beta_exact(0.0, q).unwrap() - beta_approx(0.0, q).unwrap())
            / beta_approx(0.0, q).unwrap())
        .abs();
        assert!(rel < q * q, "q={q}: {rel}");
        assert!(rel <= last);
        last = rel;
    }
    assert!((beta_approx(0.0, 0.2).unwrap() - 0.141_421_356).abs() < 1e-9);
    assert!((beta_approx(0.01, 0.0).unwrap() - 0.1).abs() < 1e-15);
    assert!(beta_approx(-0.1, 0.1).is_err());
}

#[test]
fn stability_examples() {
    let at = |q: f64| MathieuPoint {
        a: [0.0; 3],
        q: [-q / 2.0, -q / 2.0, q],
    };
    assert!(is_stable(&at(0.4)));
    assert!(is_stable(&at(0.908)));
    assert!(!is_stable(&at(0.95)));
}

#[test]
fn secular_frequency_examples() {
    let omega = 2.0 * PI * 1e5;
    let mp = MathieuPoint {
        a: [0.0; 3],
        q: [-0.1, -0.1, 0.2],
    };
    let w = secular_frequencies(&mp, omega, BetaModel::Approx).unwrap();
    assert!((w[2] / omega - 0.070_710_678).abs() < 1e-8);
    assert!((w[2] / w[0] - 2.0).abs() < 1e-12);

    let q = 0.1744;
    let mp = MathieuPoint {
        a: [0.0; 3],
        q: [-q / 2.0, -q / 2.0, q],
    };
    let f_z = secular_frequencies(&mp, omega, BetaModel::Approx).unwrap()[2] / (2.0 * PI);
    assert!((f_z - 6168.0).abs() < 5.0, "{f_z}");

    let p = ParticleSpec::nanodiamond(91e-9, 75.0).unwrap();
    let trap = reference_trap(150.0).with_asymmetry(0.05);
    let mp = mathieu_parameters(&p, &trap);
    let w = secular_frequencies(&mp, omega, BetaModel::Approx).unwrap();
    assert!((w[0] / w[1] - 1.05 / 0.95).abs() < 1e-12);
}

#[test]
fn exact_ratio_within_band() {
    for &qz in &[0.1, 0.3, 0.5] {
        let mp = MathieuPoint {
            a: [0.0; 3],
            q: [-qz / 2.0, -qz / 2.0, qz],
        };
        let w = secular_frequencies(&mp, 1.0, BetaModel::Exact).unwrap();
        let r = w[2] / w[0];
        assert!((2.0..=2.1).contains(&r), "q={qz}: {r}");
    }
}

proptest! {
    #[test]
    fn laplace_constraint(qm in 1.0f64..200.0, v0 in 1.0f64..800.0, eps in 0.0f64..0.2, u in -5.0f64..5.0) {
        let mut trap = reference_trap(v0).with_asymmetry(eps);
        trap.dc_voltage = u;
        let mp = mathieu_parameters_at(qm, &trap, v0);
        let sq: f64 = mp.q.iter().sum();
        let sa: f64 = mp.a.iter().sum();
        prop_assert!(sq.abs() <= 1e-12 * mp.q[2].abs().max(1e-300));
        prop_assert!(sa.abs() <= 1e-12 * mp.a[2].abs().max(1e-300));
    }

    #[test]
    fn axial_frequency_increases_with_voltage(v0 in 10.0f64..300.0, dv in 0.1f64..50.0) {
        let trap = reference_trap(v0);
        let w = |v: f64| {
            let mp = mathieu_parameters_at(75.0, &trap, v);
            secular_frequencies(&mp, trap.drive_frequency, BetaModel::Exact).unwrap()[2]
        };
        prop_assert!(w(v0 + dv) > w(v0));
    }

    #[test]
    fn exact_beta_in_unit_interval(q in 0.01f64..0.9) {
        let b = beta_exact(0.0, q).unwrap();
        prop_assert!(b > 0.0 && b < 1.0);
    }
}
