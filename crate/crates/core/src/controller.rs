//! Cascaded tracking controller.
//!
//! Position PD with ground-effect feedforward produces a desired
//! acceleration; its direction and the reference yaw give the desired
//! attitude; a quaternion attitude loop feeds a body-rate loop; the torque
//! stage is either model-based with the equivalent inertia `J'(h)`,
//! incremental (INDI), or both; a mixer inverse allocates rotor speeds.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector4};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::estimation::{ObserverInput, WrenchEstimate, WrenchObserver};
use crate::flatness::{flat_reference, FlatModel, FlatReference, Trajectory};
use crate::groundfx::GroundEffectParams;
use crate::sim::{ControllerInput, FlightController, RotationalModel, TickOutput};
use crate::vehicle::{Mixer, RotorSpeeds, VehicleParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccelComp {
    None,
    Indi,
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TorqueComp {
    None,
    Model,
    Indi,
    Hybrid,
}

impl FromStr for AccelComp {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "indi" => Ok(Self::Indi),
            "model" => Ok(Self::Model),
            other => Err(format!("expected none|indi|model, got `{other}`")),
        }
    }
}

impl FromStr for TorqueComp {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "model" => Ok(Self::Model),
            "indi" => Ok(Self::Indi),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(format!("expected none|model|indi|hybrid, got `{other}`")),
        }
    }
}

impl fmt::Display for AccelComp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Indi => "indi",
            Self::Model => "model",
        })
    }
}

impl fmt::Display for TorqueComp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Model => "model",
            Self::Indi => "indi",
            Self::Hybrid => "hybrid",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlGains {
    pub kp: Vector3<f64>,
    pub kv: Vector3<f64>,
    pub kxi: Vector3<f64>,
    pub kw: Vector3<f64>,
    pub accel_comp: AccelComp,
    pub torque_comp: TorqueComp,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            kp: Vector3::new(10.0, 10.0, 16.0),
            kv: Vector3::new(5.0, 5.0, 6.0),
            kxi: Vector3::new(8.0, 8.0, 3.0),
            kw: Vector3::new(25.0, 25.0, 10.0),
            accel_comp: AccelComp::Model,
            torque_comp: TorqueComp::Hybrid,
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        if [self.kp, self.kv, self.kxi, self.kw].iter().flat_map(|v| v.iter()).any(|g| !(*g >= 0.0)) {
            return Err(Error::Parameter("gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// `(a_ref + g·z_W) + K_P·e_p + K_V·e_v − comp`, where `comp` is the
/// external acceleration to cancel (modelled or observed).
pub fn acceleration_command(
    a_ref: &Vector3<f64>,
    gravity: f64,
    e_p: &Vector3<f64>,
    e_v: &Vector3<f64>,
    gains: &ControlGains,
    comp: &Vector3<f64>,
) -> Vector3<f64> {
    a_ref + gravity * Vector3::z() + gains.kp.component_mul(e_p) + gains.kv.component_mul(e_v) - comp
}

/// Modelled disturbance acceleration `a_D + a_G` at the desired state:
/// `a_D = −R·D(h)·Rᵀ·v_ref / m`, `a_G = (T_ref/m)·F_G(h)·z_B`.
pub fn model_disturbance_accel(
    rot_ref: &Matrix3<f64>,
    v_ref: &Vector3<f64>,
    thrust_ref: f64,
    h: f64,
    mass: f64,
    ground: &GroundEffectParams,
    use_thrust: bool,
    use_drag: bool,
) -> Result<Vector3<f64>> {
    let h = h.max(0.0);
    let mut a = Vector3::zeros();
    if use_drag {
        a += ground.drag_force(rot_ref, v_ref, h)? / mass;
    }
    if use_thrust {
        a += ground.ge_force(rot_ref, thrust_ref, h)? / mass;
    }
    Ok(a)
}

/// Attitude error as a rotation vector in the estimated body frame:
/// `ξ_e = conj(ξ̂)∘ξ_des` (sign fixed to `w ≥ 0`), mapped to
/// `2·acos(w)/√(1−w²)·(x, y, z)`.
pub fn attitude_error_vector(q_hat: &UnitQuaternion<f64>, q_des: &UnitQuaternion<f64>) -> Result<Vector3<f64>> {
    for q in [q_hat, q_des] {
        if (q.quaternion().norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!("quaternion norm {} is not unit", q.quaternion().norm())));
        }
    }
    let mut e = *(q_hat.inverse() * q_des).quaternion();
    if e.w < 0.0 {
        e = -e;
    }
    let w = e.w.min(1.0);
    let v = e.imag();
    if 1.0 - w < 1e-8 {
        return Ok(2.0 * v);
    }
    Ok(2.0 * w.acos() / (1.0 - w * w).sqrt() * v)
}

/// `ω_des = K_ξ·ξ_e + ω_ref`, `ω̇_des = K_ω·(ω_des − ω_f) + ω̇_ref`.
pub fn bodyrate_command(
    xi_e: &Vector3<f64>,
    omega_ref: &Vector3<f64>,
    omega_f: &Vector3<f64>,
    omega_dot_ref: &Vector3<f64>,
    gains: &ControlGains,
) -> (Vector3<f64>, Vector3<f64>) {
    let w_des = gains.kxi.component_mul(xi_e) + omega_ref;
    let wd_des = gains.kw.component_mul(&(w_des - omega_f)) + omega_dot_ref;
    (w_des, wd_des)
}

/// Projection of the desired force on the current thrust axis, floored at 0.
pub fn thrust_command(a_des: &Vector3<f64>, z_b: &Vector3<f64>, mass: f64) -> f64 {
    let n = z_b.norm();
    if n == 0.0 {
        return 0.0;
    }
    (mass * a_des.dot(z_b) / n).max(0.0)
}

/// Euler torque `J·ω̇_des + ω_des × J·ω_des` for the given inertia (`J` or `J'(h)`).
pub fn torque_command_model(w_des: &Vector3<f64>, wd_des: &Vector3<f64>, inertia: &Matrix3<f64>) -> Vector3<f64> {
    inertia * wd_des + w_des.cross(&(inertia * w_des))
}

/// Incremental torque `τ̂_B + J·(ω̇_des − ω̇_f)`.
pub fn torque_command_indi(
    torque_hat: &Vector3<f64>,
    wd_des: &Vector3<f64>,
    wd_f: &Vector3<f64>,
    inertia: &Matrix3<f64>,
) -> Vector3<f64> {
    torque_hat + inertia * (wd_des - wd_f)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub rotors: RotorSpeeds,
    pub saturated: bool,
    /// Wrench actually realised by `rotors`.
    pub thrust: f64,
    pub torque: Vector3<f64>,
}

/// Rotor speeds for a wrench. Out-of-range commands shed yaw torque first,
/// then scale roll/pitch torque, then clamp thrust.
pub fn allocate(thrust: f64, torque: &Vector3<f64>, mixer: &Mixer, n_max: f64) -> Allocation {
    let hi = n_max * n_max;
    let feasible = |n2: &Vector4<f64>| n2.iter().all(|x| *x >= -1e-9 * hi && *x <= hi * (1.0 + 1e-12));
    let full = mixer.squared_for(thrust, torque);
    let finish = |n2: Vector4<f64>, saturated: bool| {
        let n2 = n2.map(|x| x.clamp(0.0, hi));
        let rotors = RotorSpeeds::from_squared(&n2);
        let (t, tau) = mixer.thrust_torque(&rotors);
        Allocation {
            rotors,
            saturated,
            thrust: t,
            torque: tau,
        }
    };
    if feasible(&full) {
        return finish(full, false);
    }

    // Largest s in [0, 1] keeping `base + s·dir` inside [0, hi].
    let max_scale = |base: &Vector4<f64>, dir: &Vector4<f64>| -> Option<f64> {
        let (mut lo, mut up) = (0.0f64, 1.0f64);
        for i in 0..4 {
            let (b, d) = (base[i], dir[i]);
            if d.abs() < 1e-300 {
                if b < -1e-9 * hi || b > hi * (1.0 + 1e-12) {
                    return None;
                }
                continue;
            }
            let (s0, s1) = ((0.0 - b) / d, (hi - b) / d);
            let (a, c) = if s0 < s1 { (s0, s1) } else { (s1, s0) };
            lo = lo.max(a);
            up = up.min(c);
        }
        (lo <= up + 1e-12).then_some(up)
    };

    let tilt = Vector3::new(torque.x, torque.y, 0.0);
    let yaw = Vector3::new(0.0, 0.0, torque.z);
    let base = mixer.squared_for(thrust, &tilt);
    let yaw_dir = mixer.squared_for(0.0, &yaw);
    if let Some(s) = max_scale(&base, &yaw_dir) {
        return finish(base + s * yaw_dir, true);
    }
    let hover = mixer.squared_for(thrust, &Vector3::zeros());
    let tilt_dir = mixer.squared_for(0.0, &tilt);
    if let Some(s) = max_scale(&hover, &tilt_dir) {
        return finish(hover + s * tilt_dir, true);
    }
    let t_max = mixer.thrust_torque(&RotorSpeeds::equal(n_max)).0;
    let t_clamped = thrust.clamp(0.0, t_max);
    let hover = mixer.squared_for(t_clamped, &Vector3::zeros());
    let s = max_scale(&hover, &tilt_dir).unwrap_or(0.0);
    finish(hover + s * tilt_dir, true)
}

/// Settings for [`CascadeController`].
#[derive(Clone, Debug)]
pub struct ControllerConfig {
    pub gains: ControlGains,
    /// Control period (s).
    pub ctrl_period: f64,
    /// Control ticks per position-loop update.
    pub pos_ticks: usize,
    /// Low-pass cutoff for gyro, angular acceleration and observer (Hz).
    pub filter_cutoff: f64,
    /// Look-ahead of the feedforward references (s).
    pub ff_lead: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: ControlGains::default(),
            ctrl_period: 0.002,
            pos_ticks: 5,
            filter_cutoff: 40.0,
            ff_lead: 0.001,
        }
    }
}

pub const CONTROLLER_KEYS: &[&str] = &[
    "ctrl.kp",
    "ctrl.kv",
    "ctrl.kxi",
    "ctrl.kw",
    "ctrl.accel_comp",
    "ctrl.torque_comp",
    "ctrl.filter_cutoff",
    "ctrl.ff_lead",
    "ctrl.feedforward_only",
];

impl ControllerConfig {
    /// Periods come from the simulation settings; the rest from `ctrl.*` keys.
    pub fn from_config(cfg: &KvConfig, ctrl_period: f64, pos_ticks: usize) -> Result<Self> {
        let d = ControlGains::default();
        let parse_mode = |key: &str| cfg.get(key).map(|e| (e, e.value.clone()));
        let accel_comp = match parse_mode("ctrl.accel_comp") {
            Some((e, v)) => v.parse().map_err(|m: String| e.error(m))?,
            None => d.accel_comp,
        };
        let torque_comp = match parse_mode("ctrl.torque_comp") {
            Some((e, v)) => v.parse().map_err(|m: String| e.error(m))?,
            None => d.torque_comp,
        };
        let gains = ControlGains {
            kp: cfg.vec3_or("ctrl.kp", d.kp)?,
            kv: cfg.vec3_or("ctrl.kv", d.kv)?,
            kxi: cfg.vec3_or("ctrl.kxi", d.kxi)?,
            kw: cfg.vec3_or("ctrl.kw", d.kw)?,
            accel_comp,
            torque_comp,
        };
        gains.validate()?;
        Ok(Self {
            gains,
            ctrl_period,
            pos_ticks,
            filter_cutoff: cfg.f64_or("ctrl.filter_cutoff", 40.0)?,
            ff_lead: cfg.f64_or("ctrl.ff_lead", ctrl_period / 2.0)?,
        })
    }
}

/// The full cascade as a stateful per-run controller.
pub struct CascadeController {
    cfg: ControllerConfig,
    trajectory: Trajectory,
    /// The controller's (possibly mismatched) knowledge of the vehicle.
    model: FlatModel,
    /// Model restricted to what the selected modes may use.
    ref_model: FlatModel,
    mixer: Mixer,
    observer: WrenchObserver,
    tick: usize,
    feedback: Vector3<f64>,
}

impl CascadeController {
    pub fn new(cfg: ControllerConfig, trajectory: Trajectory, model: FlatModel) -> Result<Self> {
        cfg.gains.validate()?;
        let mut ref_model = model.free_air();
        ref_model.thrust_rate_height_term = model.thrust_rate_height_term;
        if cfg.gains.accel_comp == AccelComp::Model {
            ref_model.use_thrust_model = true;
            ref_model.use_drag_model = true;
        }
        if matches!(cfg.gains.torque_comp, TorqueComp::Model | TorqueComp::Hybrid) {
            ref_model.use_equivalent_inertia = true;
        }
        let observer = WrenchObserver::new(
            cfg.filter_cutoff,
            cfg.ctrl_period,
            model.vehicle.mass,
            model.vehicle.inertia,
        )?;
        Ok(Self {
            mixer: model.mixer().clone(),
            cfg,
            trajectory,
            ref_model,
            model,
            observer,
            tick: 0,
            feedback: Vector3::zeros(),
        })
    }

    pub fn reference(&self, t: f64) -> Result<FlatReference> {
        flat_reference(&self.trajectory.sample(t), &self.ref_model)
    }

    fn vehicle(&self) -> &VehicleParams {
        &self.model.vehicle
    }

    /// Disturbance the full model predicts at the measured state.
    fn predicted_disturbance(&self, input: &ControllerInput, thrust: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
        let rot = *input.q.to_rotation_matrix().matrix();
        let h = self.vehicle().rotor_height(input.p.z).max(0.0);
        let g = &self.model.ground;
        let m = self.vehicle().mass;
        let accel = (g.ge_force(&rot, thrust, h)? + g.drag_force(&rot, &input.v, h)?) / m;
        let torque = g.leveling_torque(&rot, thrust, h)?;
        Ok((accel, torque))
    }
}

impl FlightController for CascadeController {
    fn tick(&mut self, input: &ControllerInput) -> Result<TickOutput> {
        let period = self.cfg.ctrl_period;
        if input.t - input.rotors_t > 2.0 * period + 1e-12 {
            return Err(Error::Controller(format!(
                "rotor-speed measurement is {:.4} s old at t = {:.4}",
                input.t - input.rotors_t,
                input.t
            )));
        }
        let m = self.vehicle().mass;
        let gravity = self.model.gravity;
        let (thrust_meas, torque_meas) = self.mixer.thrust_torque(&input.rotors);
        let (model_accel, model_torque) = self.predicted_disturbance(input, thrust_meas)?;
        let est: WrenchEstimate = self.observer.update(&ObserverInput {
            t: input.t,
            q: input.q,
            specific_force: input.imu.specific_force,
            gyro: input.imu.gyro,
            thrust: thrust_meas,
            torque_b: torque_meas,
            model_accel,
            model_torque,
        });

        let now = self.trajectory.sample(input.t);
        let ff = self.reference(input.t + self.cfg.ff_lead)?;
        let gains = &self.cfg.gains;
        if self.tick.is_multiple_of(self.cfg.pos_ticks.max(1)) {
            let e_p = now.p - input.p;
            let e_v = now.v - input.v;
            self.feedback = gains.kp.component_mul(&e_p) + gains.kv.component_mul(&e_v);
        }
        self.tick += 1;

        let comp = match gains.accel_comp {
            AccelComp::None => Vector3::zeros(),
            AccelComp::Indi => est.accel,
            AccelComp::Model => {
                let rot_ref = *ff.attitude.to_rotation_matrix().matrix();
                model_disturbance_accel(&rot_ref, &ff.flat.v, ff.thrust, ff.h, m, &self.model.ground, true, true)?
            }
        };
        let a_des = ff.flat.a + gravity * Vector3::z() + self.feedback - comp;
        let q_des = desired_attitude(&a_des, ff.flat.yaw).unwrap_or(ff.attitude);

        let xi_e = attitude_error_vector(&input.q, &q_des)?;
        let (w_des, wd_des) = bodyrate_command(&xi_e, &ff.omega, &est.omega_f, &ff.omega_dot, gains);
        let z_hat = input.q * Vector3::z();
        let thrust = thrust_command(&a_des, &z_hat, m);

        let h_des = ff.h;
        let j = self.vehicle().inertia;
        let j_eq = || self.model.ground.equivalent_inertia(h_des.max(0.0), Some(ff.thrust), self.vehicle());
        let torque = match gains.torque_comp {
            TorqueComp::None => torque_command_model(&w_des, &wd_des, &j),
            TorqueComp::Model => torque_command_model(&w_des, &wd_des, &j_eq()?),
            TorqueComp::Indi => torque_command_indi(&est.torque_b_f, &wd_des, &est.omega_dot_f, &j),
            TorqueComp::Hybrid => torque_command_indi(&est.torque_b_f, &wd_des, &est.omega_dot_f, &j_eq()?),
        };
        let alloc = allocate(thrust, &torque, &self.mixer, self.vehicle().n_max);
        Ok(TickOutput {
            thrust,
            torque,
            rotors: alloc.rotors,
            saturated: alloc.saturated,
            p_des: now.p,
            v_des: now.v,
            q_des,
            infeasible: ff.infeasible,
            accel_ext: est.accel,
            torque_ext: est.torque,
            accel_residual: est.accel_residual,
            torque_residual: est.torque_residual,
        })
    }
}

/// Attitude whose thrust axis is `a_des` with the given heading.
pub fn desired_attitude(a_des: &Vector3<f64>, yaw: f64) -> Option<UnitQuaternion<f64>> {
    let n = a_des.norm();
    if n < 1e-9 {
        return None;
    }
    let z = a_des / n;
    let y_c = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);
    let x = y_c.cross(&z);
    if x.norm() < 1e-9 {
        return None;
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Some(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        Matrix3::from_columns(&[x, y, z]),
    )))
}

/// Open-loop playback of the reference rotor speeds.
///
/// With an actuator lag configured, each command is the held value that
/// drives a first-order rotor from the current reference speed to the next
/// one in exactly one control period. With the explicit rotational model the
/// leveling torque is cancelled directly instead of through `J'(h)`.
pub struct FeedforwardController {
    trajectory: Trajectory,
    model: FlatModel,
    lead: f64,
    motor_tau: f64,
    period: f64,
    rotational_model: RotationalModel,
}

impl FeedforwardController {
    /// `lead` shifts the reference forward, typically half a control period
    /// so a held command matches the interval it is applied over.
    pub fn new(trajectory: Trajectory, model: FlatModel, lead: f64) -> Self {
        Self {
            trajectory,
            model,
            lead,
            motor_tau: 0.0,
            period: 0.0,
            rotational_model: RotationalModel::Equivalent,
        }
    }

    /// Invert a first-order rotor lag `motor_tau` under commands held for `period`.
    pub fn with_actuator(mut self, motor_tau: f64, period: f64) -> Self {
        self.motor_tau = motor_tau;
        self.period = period;
        self
    }

    pub fn with_rotational_model(mut self, model: RotationalModel) -> Self {
        self.rotational_model = model;
        self
    }

    fn rotor_reference(&self, t: f64) -> Result<(FlatReference, RotorSpeeds, bool)> {
        let r = flat_reference(&self.trajectory.sample(t), &self.model)?;
        let torque = match self.rotational_model {
            RotationalModel::Equivalent => r.torque,
            RotationalModel::Explicit => {
                let base = crate::flatness::ref_torque(&r.omega, &r.omega_dot, &self.model.vehicle.inertia);
                if self.model.use_equivalent_inertia {
                    let rot = *r.attitude.to_rotation_matrix().matrix();
                    base - self.model.ground.leveling_torque(&rot, r.thrust, r.h.max(0.0))?
                } else {
                    base
                }
            }
        };
        let alloc = allocate(r.thrust, &torque, self.model.mixer(), self.model.vehicle.n_max);
        Ok((FlatReference { torque, ..r }, alloc.rotors, alloc.saturated))
    }
}

impl FlightController for FeedforwardController {
    fn tick(&mut self, input: &ControllerInput) -> Result<TickOutput> {
        let now = self.trajectory.sample(input.t);
        let (r, n_now, saturated) = self.rotor_reference(input.t + self.lead)?;
        let rotors = if self.motor_tau > 0.0 && self.period > 0.0 {
            let (_, n_next, _) = self.rotor_reference(input.t + self.lead + self.period)?;
            let gain = 1.0 - (-self.period / self.motor_tau).exp();
            let n_max = self.model.vehicle.n_max;
            RotorSpeeds([0, 1, 2, 3].map(|i| (n_now.0[i] + (n_next.0[i] - n_now.0[i]) / gain).clamp(0.0, n_max)))
        } else {
            n_now
        };
        Ok(TickOutput {
            thrust: r.thrust,
            torque: r.torque,
            rotors,
            saturated,
            p_des: now.p,
            v_des: now.v,
            q_des: r.attitude,
            infeasible: r.infeasible,
            accel_ext: Vector3::zeros(),
            torque_ext: Vector3::zeros(),
            accel_residual: Vector3::zeros(),
            torque_residual: Vector3::zeros(),
        })
    }
}
