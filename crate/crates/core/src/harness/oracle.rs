//! Standalone numerical checks of the ground-effect models.
//!
//! Each check returns an [`OracleReport`] with the worst observed error and
//! the threshold it is held to. The command-line `oracle` subcommand prints
//! these; the acceptance tests assert on them.

use std::fmt;

use nalgebra::{UnitQuaternion, Vector3};
use serde::Serialize;

use crate::controller::{allocate, attitude_error_vector, bodyrate_command, torque_command_model, ControlGains};
use crate::error::{Error, Result};
use crate::groundfx::{quadrature_oracle, quadrature_oracle_with, GroundEffectParams};
use crate::sim::{
    ControllerInput, DisturbanceToggles, FlightController, Plant, RigidState, RotationalModel, SimConfig, TickOutput,
    run_scenario,
};
use crate::vehicle::VehicleParams;
use crate::GRAVITY;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub passed: bool,
    /// Worst error found, in the unit named by `detail`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (limit {:.3e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold,
            self.detail
        )
    }
}

fn report(name: &str, value: f64, threshold: f64, detail: String) -> OracleReport {
    OracleReport {
        name: name.into(),
        passed: value <= threshold,
        value,
        threshold,
        detail,
    }
}

pub const CHECK_NAMES: &[&str] = &[
    "quadrature",
    "quadrature-convergence",
    "mg-identity",
    "fg-derivative",
    "mg-peak",
    "equivalence",
];

pub fn run_check(name: &str) -> Result<Vec<OracleReport>> {
    let ground = GroundEffectParams::default();
    let vehicle = VehicleParams::default();
    match name {
        "quadrature" => torque_closed_form_vs_quadrature(&ground, &vehicle),
        "quadrature-convergence" => Ok(vec![quadrature_convergence(&ground, &vehicle)?]),
        "mg-identity" => Ok(vec![mg_identity(&ground, &vehicle)?]),
        "fg-derivative" => Ok(vec![fg_derivative(&ground)?]),
        "mg-peak" => Ok(vec![mg_peak(&ground)?]),
        "equivalence" => Ok(vec![rotational_equivalence(&vehicle, &ground, 5f64.to_radians(), 1.0)?]),
        "all" => {
            let mut out = Vec::new();
            for n in CHECK_NAMES {
                out.extend(run_check(n)?);
            }
            Ok(out)
        }
        other => Err(Error::Input(format!(
            "unknown oracle check `{other}`; expected one of {} or all",
            CHECK_NAMES.join(", ")
        ))),
    }
}

/// Relative error between the linearised leveling torque
/// `(b²/8)·|F_G'|·T·sin δ` and the rotor-circle quadrature, worst case over
/// `h ∈ [0.1, 1.0]` for tilts up to 2° (limit 0.5%) and up to 10° (limit 5%).
pub fn torque_closed_form_vs_quadrature(ground: &GroundEffectParams, vehicle: &VehicleParams) -> Result<Vec<OracleReport>> {
    let b = vehicle.wheelbase;
    let thrust = vehicle.mass * GRAVITY;
    let (mut worst_small, mut worst_large) = ((0.0f64, 0.0, 0.0), (0.0f64, 0.0, 0.0));
    for i in 0..=45 {
        let h = 0.1 + 0.9 * i as f64 / 45.0;
        for j in 1..=40 {
            let deg = 10.0 * j as f64 / 40.0;
            let d = deg.to_radians();
            let closed = -b * b / 8.0 * ground.fg_prime(h)? * thrust * d.sin();
            let quad = quadrature_oracle(h, d, thrust, b, ground)?;
            let rel = ((closed - quad) / quad).abs();
            let slot = if deg <= 2.0 { &mut worst_small } else { &mut worst_large };
            if rel > slot.0 {
                *slot = (rel, h, deg);
            }
        }
    }
    let worst_large = if worst_small.0 > worst_large.0 { worst_small } else { worst_large };
    Ok(vec![
        report(
            "quadrature (tilt <= 2 deg)",
            worst_small.0,
            0.005,
            format!("relative; worst at h = {:.3} m, tilt = {:.2} deg", worst_small.1, worst_small.2),
        ),
        report(
            "quadrature (tilt <= 10 deg)",
            worst_large.0,
            0.05,
            format!("relative; worst at h = {:.3} m, tilt = {:.2} deg", worst_large.1, worst_large.2),
        ),
    ])
}

/// Simpson with 4096 intervals against 16384 intervals.
pub fn quadrature_convergence(ground: &GroundEffectParams, vehicle: &VehicleParams) -> Result<OracleReport> {
    let mut worst = 0.0f64;
    for &(h, deg) in &[(0.1, 10.0), (0.2, 5.0), (0.5, 1.0), (1.0, 0.5)] {
        let d = f64::to_radians(deg);
        let coarse = quadrature_oracle(h, d, 10.0, vehicle.wheelbase, ground)?;
        let fine = quadrature_oracle_with(h, d, 10.0, vehicle.wheelbase, ground, 16384)?;
        worst = worst.max(((coarse - fine) / fine).abs());
    }
    Ok(report("quadrature-convergence", worst, 1e-10, "relative".into()))
}

/// `M_G(h) = −(b²/8)·F_G'(h)` on a 1000-point grid over `[0, 2]` m when the
/// torque parameters are tied to the thrust model.
pub fn mg_identity(ground: &GroundEffectParams, vehicle: &VehicleParams) -> Result<OracleReport> {
    let b = vehicle.wheelbase;
    let tied = GroundEffectParams::tied(ground.g1, ground.g2, b);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let h = 2.0 * i as f64 / 999.0;
        let lhs = tied.mg(h)?;
        let rhs = -b * b / 8.0 * tied.fg_prime(h)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(report("mg-identity", worst, 1e-9, "absolute, m".into()))
}

/// Analytic `F_G'` against a central difference on `[0.05, 2]` m.
pub fn fg_derivative(ground: &GroundEffectParams) -> Result<OracleReport> {
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let h = 0.05 + 1.95 * i as f64 / 200.0;
        let eps = 1e-5;
        let fd = (ground.fg(h + eps)? - ground.fg(h - eps)?) / (2.0 * eps);
        let exact = ground.fg_prime(h)?;
        worst = worst.max(((fd - exact) / exact).abs());
    }
    Ok(report("fg-derivative", worst, 1e-6, "relative".into()))
}

/// Closed-form argmax of `M_G` against a dense grid search.
pub fn mg_peak(ground: &GroundEffectParams) -> Result<OracleReport> {
    let n = 200_000;
    let mut best = (0.0, f64::MIN);
    for i in 0..=n {
        let h = 2.0 * i as f64 / n as f64;
        let v = ground.mg(h)?;
        if v > best.1 {
            best = (h, v);
        }
    }
    let closed = ground.mg_argmax();
    Ok(report(
        "mg-peak",
        (best.0 - closed).abs(),
        2.0 * 2.0 / n as f64,
        format!("m; argmax = {closed:.5} m, M_G max = {:.5} m", best.1),
    ))
}

/// Level-hold attitude loop with constant hover thrust, used to compare
/// rotational models under identical inner-loop control.
struct AttitudeHold {
    gains: ControlGains,
    vehicle: VehicleParams,
    mixer: crate::vehicle::Mixer,
    thrust: f64,
}

impl FlightController for AttitudeHold {
    fn tick(&mut self, input: &ControllerInput) -> Result<TickOutput> {
        let level = UnitQuaternion::identity();
        let xi_e = attitude_error_vector(&input.q, &level)?;
        let (w_des, wd_des) = bodyrate_command(&xi_e, &Vector3::zeros(), &input.imu.gyro, &Vector3::zeros(), &self.gains);
        let torque = torque_command_model(&w_des, &wd_des, &self.vehicle.inertia);
        let alloc = allocate(self.thrust, &torque, &self.mixer, self.vehicle.n_max);
        Ok(TickOutput {
            thrust: alloc.thrust,
            torque: alloc.torque,
            rotors: alloc.rotors,
            saturated: alloc.saturated,
            p_des: input.p,
            v_des: Vector3::zeros(),
            q_des: level,
            infeasible: false,
            accel_ext: Vector3::zeros(),
            torque_ext: Vector3::zeros(),
            accel_residual: Vector3::zeros(),
            torque_residual: Vector3::zeros(),
        })
    }
}

/// Tilt history under the explicit leveling torque on `J` and under the
/// equivalent inertia `J'(h)` without the torque, both from tilt `delta0`
/// at the `M_G` peak and held level by the same attitude loop. Returns the
/// RMS of the tilt difference over the RMS tilt of the explicit model.
pub fn rotational_equivalence(
    vehicle: &VehicleParams,
    ground: &GroundEffectParams,
    delta0: f64,
    duration: f64,
) -> Result<OracleReport> {
    let h = ground.mg_argmax();
    let thrust = vehicle.mass * GRAVITY / (1.0 + ground.fg(h)?);
    let tilt_history = |model: RotationalModel| -> Result<Vec<f64>> {
        let cfg = SimConfig {
            toggles: DisturbanceToggles {
                ge_force: true,
                ge_torque: true,
                ge_drag: false,
            },
            rotational_model: model,
            ..SimConfig::default()
        };
        let plant = Plant::new(vehicle.clone(), ground.clone(), cfg)?;
        let n = vehicle.equal_speed_for_thrust(thrust);
        let init = RigidState {
            p: Vector3::new(0.0, 0.0, h - vehicle.rotor_plane_offset),
            q: UnitQuaternion::from_axis_angle(&Vector3::x_axis(), delta0),
            rotors: [n; 4],
            ..RigidState::at_rest(Vector3::zeros())
        };
        let mut ctrl = AttitudeHold {
            gains: ControlGains::default(),
            vehicle: vehicle.clone(),
            mixer: plant.mixer().clone(),
            thrust,
        };
        let log = run_scenario(&plant, &mut ctrl, init, duration, 0)?;
        if let Some(t) = log.crashed {
            return Err(Error::Crashed { time: t, height: h });
        }
        Ok(log.rows.iter().map(|r| r.q.angle()).collect())
    };
    let explicit = tilt_history(RotationalModel::Explicit)?;
    let equivalent = tilt_history(RotationalModel::Equivalent)?;
    let n = explicit.len().min(equivalent.len()) as f64;
    let diff = explicit
        .iter()
        .zip(&equivalent)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n;
    let base = explicit.iter().map(|a| a * a).sum::<f64>() / n;
    let rel = (diff / base).sqrt();
    Ok(report(
        "equivalence",
        rel,
        0.02,
        format!(
            "relative RMS tilt difference over {duration} s from {:.1} deg at h = {h:.3} m",
            delta0.to_degrees()
        ),
    ))
}
