//! Plot-ready x/y series.

use std::path::Path;

use crate::error::Result;
use crate::groundfx::{quadrature_oracle, GroundEffectParams};
use crate::vehicle::VehicleParams;
use crate::GRAVITY;

pub fn write_series<I>(path: &Path, headers: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(headers)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `h, F_G, F_G', M_G, added inertia, d_x, d_y` on a uniform grid.
pub fn model_curves(ground: &GroundEffectParams, vehicle: &VehicleParams, h_max: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    (0..=n)
        .map(|i| {
            let h = h_max * i as f64 / n as f64;
            let j = ground.equivalent_inertia(h, None, vehicle)?;
            let (dx, dy) = ground.drag.lookup(h);
            Ok(vec![
                h,
                ground.fg(h)?,
                ground.fg_prime(h)?,
                ground.mg(h)?,
                j[(0, 0)] - vehicle.inertia[(0, 0)],
                dx,
                dy,
            ])
        })
        .collect()
}

pub const MODEL_CURVE_COLUMNS: &[&str] = &["h", "fg", "fg_prime", "mg", "inertia_added", "dx", "dy"];

pub fn write_model_curves(path: &Path, ground: &GroundEffectParams, vehicle: &VehicleParams) -> Result<()> {
    write_series(path, MODEL_CURVE_COLUMNS, model_curves(ground, vehicle, 2.0, 400)?)
}

/// Leveling torque against tilt at height `h` for hover thrust:
/// `δ (deg), model (with saturation), closed form, quadrature`.
pub fn torque_vs_tilt(ground: &GroundEffectParams, vehicle: &VehicleParams, h: f64, max_deg: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    let thrust = vehicle.mass * GRAVITY / (1.0 + ground.fg(h)?);
    (0..=n)
        .map(|i| {
            let deg = max_deg * i as f64 / n as f64;
            let d = deg.to_radians();
            let rot = *nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::x_axis(), d).matrix();
            let model = ground.leveling_torque(&rot, thrust, h)?.norm();
            let closed = -vehicle.wheelbase.powi(2) / 8.0 * d.sin() * ground.fg_prime(h)? * thrust;
            let quad = quadrature_oracle(h, d, thrust, vehicle.wheelbase, ground).unwrap_or(f64::NAN);
            Ok(vec![deg, model, closed, quad.abs()])
        })
        .collect()
}

pub const TORQUE_TILT_COLUMNS: &[&str] = &["delta_deg", "model", "closed_form", "quadrature"];
