//! WebAssembly bindings for `www/index.html`.
//!
//! Every export returns a JSON string so the page can stay framework-free.
//! Errors come back as `{"error": "..."}`.

use nearground::config::KvConfig;
use nearground::groundfx::GroundEffectParams;
use nearground::harness::curves::{self, MODEL_CURVE_COLUMNS, TORQUE_TILT_COLUMNS};
use nearground::harness::metrics::{profile_flatness, profile_peak};
use nearground::harness::runner::run;
use nearground::harness::Scenario;
use nearground::vehicle::VehicleParams;
use nearground::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const VEHICLE_CFG: &str = include_str!("../../../scenarios/vehicle.cfg");
const GROUND_CFG: &str = include_str!("../../../scenarios/ground_effect.cfg");
const DESCENT_CFG: &str = include_str!("../../../scenarios/descent_hybrid.cfg");

fn finish(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn defaults() -> Result<(VehicleParams, GroundEffectParams)> {
    let cfg = base_config()?;
    let vehicle = VehicleParams::from_config(&cfg)?;
    let ground = GroundEffectParams::from_config(&cfg, vehicle.wheelbase)?;
    Ok((vehicle, ground))
}

fn base_config() -> Result<KvConfig> {
    let mut cfg = KvConfig::parse(VEHICLE_CFG)?;
    cfg.overlay(&KvConfig::parse(GROUND_CFG)?);
    Ok(cfg)
}

/// `F_G`, `F_G'`, `M_G`, added inertia and drag on `[0, h_max]`.
#[wasm_bindgen]
pub fn model_curves(h_max: f64, n: usize) -> String {
    finish((|| {
        let (vehicle, ground) = defaults()?;
        let rows = curves::model_curves(&ground, &vehicle, h_max, n.max(2))?;
        Ok(json!({ "columns": MODEL_CURVE_COLUMNS, "rows": rows, "mg_argmax": ground.mg_argmax() }))
    })())
}

/// Leveling torque magnitude against tilt at rotor-plane height `h`.
#[wasm_bindgen]
pub fn torque_vs_tilt(h: f64, max_deg: f64, n: usize) -> String {
    finish((|| {
        let (vehicle, ground) = defaults()?;
        let rows = curves::torque_vs_tilt(&ground, &vehicle, h, max_deg, n.max(2))?;
        Ok(json!({ "columns": TORQUE_TILT_COLUMNS, "rows": rows }))
    })())
}

/// Flies the hover-descent scenario with the chosen torque compensation
/// (`none`, `model`, `indi` or `hybrid`) and returns `E(h0)` in degrees.
#[wasm_bindgen]
pub fn angle_error_profile(torque_comp: &str, seed: u64, descent_time: f64) -> String {
    finish((|| {
        let mut cfg = base_config()?;
        let mut own = KvConfig::parse(DESCENT_CFG)?;
        own.remove("vehicle_file");
        own.remove("ground_effect_file");
        cfg.overlay(&own);
        cfg.set("ctrl.torque_comp", torque_comp.to_string());
        cfg.set("seed", seed.to_string());
        cfg.set("traj.descent_time", descent_time.to_string());
        cfg.set("duration", (descent_time + 2.0).to_string());
        let scenario = Scenario::from_config(&cfg, None)?;
        let outcome = run(&scenario)?;
        let profile = &outcome.metrics.angle_profile;
        Ok(json!({
            "profile": profile,
            "peak": profile_peak(profile),
            "max_over_mean": profile_flatness(profile),
            "crashed_at": outcome.metrics.crashed_at,
        }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exports_return_json_without_errors() {
        for text in [model_curves(2.0, 50), torque_vs_tilt(0.2, 10.0, 20), angle_error_profile("hybrid", 1, 4.0)] {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert!(v.get("error").is_none(), "{text}");
        }
    }

    #[test]
    fn bad_mode_is_reported() {
        let v: Value = serde_json::from_str(&angle_error_profile("bogus", 1, 4.0)).unwrap();
        assert!(v["error"].is_string());
    }
}
