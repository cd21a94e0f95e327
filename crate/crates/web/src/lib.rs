//! Browser bindings for three closed-form calculations: trap stability and
//! secular frequencies, the Diósi-Penrose lifetime, and the laser heat balance.

use std::f64::consts::PI;

use levitrap::decohere::{
    calibrate_radiative_constant, dp_lifetime, internal_temperature_balance, DpQuery, HeatAnchor,
    HeatBalanceModel,
};
use levitrap::trap::{is_stable, mathieu_parameters, secular_frequencies, BetaModel};
use levitrap::{ParticleSpec, TrapConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: levitrap::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct TrapReport {
    q: [f64; 3],
    a: [f64; 3],
    stable: bool,
    /// Hz, exact exponent; absent outside the stable region.
    frequencies: Option<[f64; 3]>,
    approx_frequencies: Option<[f64; 3]>,
}

/// Mathieu point and secular frequencies of a nanodiamond in the reference
/// end-cap trap. Returns a JSON object.
#[wasm_bindgen]
pub fn trap_modes(
    radius_nm: f64,
    charge_to_mass: f64,
    amplitude_v: f64,
    drive_khz: f64,
    dc_v: f64,
    asymmetry: f64,
) -> Result<String, JsError> {
    let particle = ParticleSpec::nanodiamond(radius_nm * 1e-9, charge_to_mass).map_err(js)?;
    let mut trap = TrapConfig::new(amplitude_v, 2.0 * PI * drive_khz * 1e3).with_asymmetry(asymmetry);
    trap.dc_voltage = dc_v;
    trap.validate().map_err(js)?;
    let mp = mathieu_parameters(&particle, &trap);
    let hz = |model| {
        secular_frequencies(&mp, trap.drive_frequency, model)
            .ok()
            .map(|w| w.map(|x| x / (2.0 * PI)))
    };
    let report = TrapReport {
        q: mp.q,
        a: mp.a,
        stable: is_stable(&mp),
        frequencies: hz(BetaModel::Exact),
        approx_frequencies: hz(BetaModel::Approx),
    };
    serde_json::to_string(&report).map_err(|e| JsError::new(&e.to_string()))
}

/// Collapse time in seconds of a homogeneous sphere split by `separation_m`.
#[wasm_bindgen]
pub fn dp_lifetime_seconds(mass_kg: f64, density: f64, separation_m: f64) -> Result<f64, JsError> {
    let q = DpQuery::from_density(mass_kg, density, separation_m).map_err(js)?;
    Ok(dp_lifetime(&q).map_err(js)?.seconds())
}

/// Internal temperature in K under `intensity` W/mm², with the radiative
/// constant fixed by 500 K at 165 W/mm² and 0.03 /cm in a 300 K environment.
#[wasm_bindgen]
pub fn balance_temperature(intensity_w_mm2: f64, alpha_per_cm: f64) -> Result<f64, JsError> {
    let anchor = HeatAnchor {
        intensity: 165e6,
        absorption_coefficient: 3.0,
        balance_temperature: 500.0,
        environment_temperature: 300.0,
    };
    let model = HeatBalanceModel {
        absorption_coefficient: alpha_per_cm * 100.0,
        radiative_constant: calibrate_radiative_constant(&anchor).map_err(js)?,
        environment_temperature: anchor.environment_temperature,
    };
    let particle = ParticleSpec::nanodiamond(91e-9, 75.0).map_err(js)?;
    internal_temperature_balance(intensity_w_mm2 * 1e6, &particle, &model).map_err(js)
}
