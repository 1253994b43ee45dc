//! Rigid-body simulation of the near-ground multicopter.
//!
//! Translational: `m·a = −m·g·z_W + T·z_B + f_G + f_D + f_ext`.
//! Rotational, depending on [`RotationalModel`]:
//! * `Explicit`: `J·ω̇ = −ω×Jω + τ_B + τ_G + τ_ext`
//! * `Equivalent`: `J'(h)·ω̇ = −ω×J'ω + τ_B + τ_ext` (leveling torque folded
//!   into the equivalent inertia).
//!
//! Rotor speeds follow their commands through a first-order lag.

mod log;

pub use log::{LogRow, TrajectoryLog, LOG_COLUMNS};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::groundfx::GroundEffectParams;
use crate::vehicle::{Mixer, RotorSpeeds, VehicleParams};
use crate::GRAVITY;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidState {
    /// World position of the body origin (m).
    pub p: Vector3<f64>,
    /// World velocity (m/s).
    pub v: Vector3<f64>,
    /// Attitude, world ← body.
    pub q: UnitQuaternion<f64>,
    /// Body rates (rad/s).
    pub w: Vector3<f64>,
    /// Actual rotor speeds (rpm).
    pub rotors: [f64; 4],
}

impl RigidState {
    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self {
            p,
            v: Vector3::zeros(),
            q: UnitQuaternion::identity(),
            w: Vector3::zeros(),
            rotors: [0.0; 4],
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        *self.q.to_rotation_matrix().matrix()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
            && self.w.iter().all(|x| x.is_finite())
            && self.rotors.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quaternion<f64>,
    pub w: Vector3<f64>,
    pub rotors: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationalModel {
    Explicit,
    Equivalent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DisturbanceToggles {
    pub ge_force: bool,
    pub ge_torque: bool,
    pub ge_drag: bool,
}

impl DisturbanceToggles {
    pub const ALL: Self = Self {
        ge_force: true,
        ge_torque: true,
        ge_drag: true,
    };
    pub const NONE: Self = Self {
        ge_force: false,
        ge_torque: false,
        ge_drag: false,
    };
}

/// Injected external wrench, active from `start` onwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExternalWrench {
    /// World frame (N).
    pub force: Vector3<f64>,
    /// Body frame (N·m).
    pub torque: Vector3<f64>,
    pub start: f64,
}

impl ExternalWrench {
    pub fn none() -> Self {
        Self {
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
            start: 0.0,
        }
    }

    pub fn at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        if t >= self.start {
            (self.force, self.torque)
        } else {
            (Vector3::zeros(), Vector3::zeros())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Physics step (s).
    pub dt: f64,
    /// Attitude/rate controller period (s); integer multiple of `dt`.
    pub ctrl_period: f64,
    /// Position controller period (s); integer multiple of `ctrl_period`.
    pub pos_period: f64,
    pub gravity: f64,
    pub toggles: DisturbanceToggles,
    pub rotational_model: RotationalModel,
    /// First-order motor time constant (s); 0 makes rotors follow instantly.
    pub motor_tau: f64,
    /// Accelerometer noise std (m/s²).
    pub accel_noise: f64,
    /// Gyro noise std (rad/s).
    pub gyro_noise: f64,
    /// Relative amplitude error of the controller's ground-effect model copy.
    pub mismatch: f64,
    pub external: ExternalWrench,
    /// Rotor-plane height below which the run counts as crashed (m).
    pub min_clearance: f64,
    /// Log one row every this many controller ticks.
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.0005,
            ctrl_period: 0.002,
            pos_period: 0.01,
            gravity: GRAVITY,
            toggles: DisturbanceToggles::ALL,
            rotational_model: RotationalModel::Explicit,
            motor_tau: 0.03,
            accel_noise: 0.0,
            gyro_noise: 0.0,
            mismatch: 0.0,
            external: ExternalWrench::none(),
            min_clearance: 0.0,
            log_every: 1,
        }
    }
}

pub const SIM_KEYS: &[&str] = &[
    "sim.dt",
    "sim.ctrl_period",
    "sim.pos_period",
    "sim.gravity",
    "sim.ge_force",
    "sim.ge_torque",
    "sim.ge_drag",
    "sim.torque_model",
    "sim.motor_tau",
    "sim.accel_noise",
    "sim.gyro_noise",
    "sim.mismatch",
    "sim.ext_force",
    "sim.ext_torque",
    "sim.ext_start",
    "sim.min_clearance",
    "sim.log_every",
];

impl SimConfig {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let rotational_model = match cfg.get("sim.torque_model") {
            None => d.rotational_model,
            Some(e) => match e.value.as_str() {
                "explicit" => RotationalModel::Explicit,
                "equivalent" => RotationalModel::Equivalent,
                other => return Err(e.error(format!("expected explicit|equivalent, got `{other}`"))),
            },
        };
        let s = Self {
            dt: cfg.f64_or("sim.dt", d.dt)?,
            ctrl_period: cfg.f64_or("sim.ctrl_period", d.ctrl_period)?,
            pos_period: cfg.f64_or("sim.pos_period", d.pos_period)?,
            gravity: cfg.f64_or("sim.gravity", d.gravity)?,
            toggles: DisturbanceToggles {
                ge_force: cfg.bool_or("sim.ge_force", true)?,
                ge_torque: cfg.bool_or("sim.ge_torque", true)?,
                ge_drag: cfg.bool_or("sim.ge_drag", true)?,
            },
            rotational_model,
            motor_tau: cfg.f64_or("sim.motor_tau", d.motor_tau)?,
            accel_noise: cfg.f64_or("sim.accel_noise", d.accel_noise)?,
            gyro_noise: cfg.f64_or("sim.gyro_noise", d.gyro_noise)?,
            mismatch: cfg.f64_or("sim.mismatch", d.mismatch)?,
            external: ExternalWrench {
                force: cfg.vec3_or("sim.ext_force", Vector3::zeros())?,
                torque: cfg.vec3_or("sim.ext_torque", Vector3::zeros())?,
                start: cfg.f64_or("sim.ext_start", 0.0)?,
            },
            min_clearance: cfg.f64_or("sim.min_clearance", d.min_clearance)?,
            log_every: cfg.u64_or("sim.log_every", d.log_every as u64)? as usize,
        };
        s.validate().map_err(|e| match cfg.get("sim.dt").or(cfg.get("sim.ctrl_period")) {
            Some(entry) => entry.error(e.to_string()),
            None => e,
        })?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Parameter("dt must be positive".into()));
        }
        self.ctrl_steps()?;
        self.pos_ticks()?;
        if self.motor_tau < 0.0 || self.accel_noise < 0.0 || self.gyro_noise < 0.0 {
            return Err(Error::Parameter("motor_tau and noise levels must be >= 0".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Parameter("log_every must be >= 1".into()));
        }
        Ok(())
    }

    /// Physics steps per controller tick.
    pub fn ctrl_steps(&self) -> Result<usize> {
        integer_ratio(self.ctrl_period, self.dt, "ctrl_period / dt")
    }

    /// Controller ticks per position-loop update.
    pub fn pos_ticks(&self) -> Result<usize> {
        integer_ratio(self.pos_period, self.ctrl_period, "pos_period / ctrl_period")
    }
}

fn integer_ratio(a: f64, b: f64, what: &str) -> Result<usize> {
    let r = a / b;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n {
        return Err(Error::Parameter(format!("{what} must be a positive integer, got {r}")));
    }
    Ok(n as usize)
}

/// Disturbances acting on the vehicle at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisturbanceWrench {
    /// World frame, along z_B.
    pub f_ge: Vector3<f64>,
    /// World frame, no z_B component.
    pub f_drag: Vector3<f64>,
    /// Body frame.
    pub tau_ge: Vector3<f64>,
}

/// The ground-truth vehicle model.
#[derive(Clone, Debug)]
pub struct Plant {
    pub vehicle: VehicleParams,
    pub ground: GroundEffectParams,
    pub cfg: SimConfig,
    mixer: Mixer,
    inertia_inv: Matrix3<f64>,
}

impl Plant {
    pub fn new(vehicle: VehicleParams, ground: GroundEffectParams, cfg: SimConfig) -> Result<Self> {
        ground.validate()?;
        cfg.validate()?;
        let mixer = Mixer::new(&vehicle)?;
        let inertia_inv = vehicle
            .inertia
            .try_inverse()
            .ok_or_else(|| Error::Parameter("inertia is singular".into()))?;
        Ok(Self {
            vehicle,
            ground,
            cfg,
            mixer,
            inertia_inv,
        })
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    /// Rotor-plane height, floored at zero for intermediate RK stages.
    pub fn height(&self, state: &RigidState) -> f64 {
        self.vehicle.rotor_height(state.p.z).max(0.0)
    }

    pub fn disturbances(&self, state: &RigidState) -> Result<DisturbanceWrench> {
        let rot = state.rotation();
        let (thrust, _) = self.mixer.thrust_torque(&RotorSpeeds(state.rotors));
        let h = self.height(state);
        let t = &self.cfg.toggles;
        Ok(DisturbanceWrench {
            f_ge: if t.ge_force {
                self.ground.ge_force(&rot, thrust, h)?
            } else {
                Vector3::zeros()
            },
            f_drag: if t.ge_drag {
                self.ground.drag_force(&rot, &state.v, h)?
            } else {
                Vector3::zeros()
            },
            tau_ge: if t.ge_torque {
                self.ground.leveling_torque(&rot, thrust, h)?
            } else {
                Vector3::zeros()
            },
        })
    }

    pub fn state_derivative(&self, state: &RigidState, command: &RotorSpeeds, t: f64) -> Result<StateDerivative> {
        let m = self.vehicle.mass;
        let rot = state.rotation();
        let z_b: Vector3<f64> = rot.column(2).into();
        let (thrust, tau_b) = self.mixer.thrust_torque(&RotorSpeeds(state.rotors));
        let dist = self.disturbances(state)?;
        let (f_ext, tau_ext) = self.cfg.external.at(t);

        let accel = (-m * self.cfg.gravity * Vector3::z() + thrust * z_b + dist.f_ge + dist.f_drag + f_ext) / m;

        let w = state.w;
        let w_dot = match self.cfg.rotational_model {
            RotationalModel::Explicit => {
                let j = &self.vehicle.inertia;
                self.inertia_inv * (-w.cross(&(j * w)) + tau_b + dist.tau_ge + tau_ext)
            }
            RotationalModel::Equivalent => {
                let j = if self.cfg.toggles.ge_torque {
                    self.ground
                        .equivalent_inertia(self.height(state), Some(thrust), &self.vehicle)?
                } else {
                    self.vehicle.inertia
                };
                let rhs = -w.cross(&(j * w)) + tau_b + tau_ext;
                j.try_inverse()
                    .ok_or_else(|| Error::Integration("equivalent inertia is singular".into()))?
                    * rhs
            }
        };

        let q_dot = state.q.quaternion() * Quaternion::from_imag(w) * 0.5;
        let rotors = if self.cfg.motor_tau > 0.0 {
            [0, 1, 2, 3].map(|i| (command.0[i] - state.rotors[i]) / self.cfg.motor_tau)
        } else {
            [0.0; 4]
        };
        Ok(StateDerivative {
            p: state.v,
            v: accel,
            q: q_dot,
            w: w_dot,
            rotors,
        })
    }

    /// One RK4 step of length `dt` with the rotor command held.
    pub fn step(&self, state: &RigidState, command: &RotorSpeeds, t: f64, dt: f64) -> Result<RigidState> {
        let mut start = *state;
        if self.cfg.motor_tau <= 0.0 {
            start.rotors = command.0;
        }
        let k1 = self.state_derivative(&start, command, t)?;
        let k2 = self.state_derivative(&advance(&start, &k1, dt / 2.0), command, t + dt / 2.0)?;
        let k3 = self.state_derivative(&advance(&start, &k2, dt / 2.0), command, t + dt / 2.0)?;
        let k4 = self.state_derivative(&advance(&start, &k3, dt), command, t + dt)?;
        let combined = StateDerivative {
            p: (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p) / 6.0,
            v: (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v) / 6.0,
            q: (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) / 6.0,
            w: (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w) / 6.0,
            rotors: [0, 1, 2, 3].map(|i| (k1.rotors[i] + 2.0 * k2.rotors[i] + 2.0 * k3.rotors[i] + k4.rotors[i]) / 6.0),
        };
        let next = advance(&start, &combined, dt);
        if !next.is_finite() {
            return Err(Error::Integration(format!(
                "non-finite state at t = {:.6}: before {:?}, command {:?}",
                t, state, command
            )));
        }
        Ok(next)
    }
}

fn advance(s: &RigidState, d: &StateDerivative, h: f64) -> RigidState {
    RigidState {
        p: s.p + d.p * h,
        v: s.v + d.v * h,
        q: UnitQuaternion::new_normalize(s.q.quaternion() + d.q * h),
        w: s.w + d.w * h,
        rotors: [0, 1, 2, 3].map(|i| s.rotors[i] + d.rotors[i] * h),
    }
}

/// IMU reading in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    /// Specific force `Rᵀ(a + g·z_W)`: the `(a − g)` reading of the observer.
    pub specific_force: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

/// Seeded Gaussian IMU noise.
#[derive(Clone, Debug)]
pub struct ImuNoise {
    rng: ChaCha8Rng,
    accel: Option<Normal<f64>>,
    gyro: Option<Normal<f64>>,
}

impl ImuNoise {
    pub fn new(seed: u64, accel_std: f64, gyro_std: f64) -> Self {
        let dist = |s: f64| (s > 0.0).then(|| Normal::new(0.0, s).expect("std checked positive"));
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            accel: dist(accel_std),
            gyro: dist(gyro_std),
        }
    }

    fn draw(&mut self, which: Option<Normal<f64>>) -> Vector3<f64> {
        match which {
            Some(d) => Vector3::new(d.sample(&mut self.rng), d.sample(&mut self.rng), d.sample(&mut self.rng)),
            None => Vector3::zeros(),
        }
    }
}

pub fn imu_sample(state: &RigidState, deriv: &StateDerivative, gravity: f64, noise: &mut ImuNoise) -> ImuSample {
    let rot = state.rotation();
    let specific = rot.transpose() * (deriv.v + gravity * Vector3::z());
    let na = noise.draw(noise.accel);
    let ng = noise.draw(noise.gyro);
    ImuSample {
        specific_force: specific + na,
        gyro: state.w + ng,
    }
}

/// What the controller sees at a tick.
#[derive(Clone, Copy, Debug)]
pub struct ControllerInput {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub imu: ImuSample,
    /// Measured rotor speeds and their timestamp.
    pub rotors: RotorSpeeds,
    pub rotors_t: f64,
}

/// Controller output plus the internals worth logging.
#[derive(Clone, Copy, Debug)]
pub struct TickOutput {
    pub thrust: f64,
    pub torque: Vector3<f64>,
    pub rotors: RotorSpeeds,
    pub saturated: bool,
    pub p_des: Vector3<f64>,
    pub v_des: Vector3<f64>,
    pub q_des: UnitQuaternion<f64>,
    /// Reference rotor speeds fell outside `[0, n_max]`.
    pub infeasible: bool,
    pub accel_ext: Vector3<f64>,
    pub torque_ext: Vector3<f64>,
    pub accel_residual: Vector3<f64>,
    pub torque_residual: Vector3<f64>,
}

pub trait FlightController {
    fn tick(&mut self, input: &ControllerInput) -> Result<TickOutput>;
}

/// Runs `controller` against `plant` from `initial` for `duration` seconds.
/// A ground strike ends the run early with the log flagged as crashed.
pub fn run_scenario(
    plant: &Plant,
    controller: &mut dyn FlightController,
    initial: RigidState,
    duration: f64,
    seed: u64,
) -> Result<TrajectoryLog> {
    let cfg = &plant.cfg;
    let steps = cfg.ctrl_steps()?;
    let ticks = (duration / cfg.ctrl_period).round() as usize;
    let mut noise = ImuNoise::new(seed, cfg.accel_noise, cfg.gyro_noise);
    let mut log = TrajectoryLog::default();
    let mut state = initial;
    let mut command = RotorSpeeds(initial.rotors);

    for k in 0..=ticks {
        let t = k as f64 * cfg.ctrl_period;
        let h = plant.vehicle.rotor_height(state.p.z);
        if h < cfg.min_clearance {
            log.crashed = Some(t);
            ::log::warn!("crash at t = {t:.3} s, h = {h:.4} m");
            break;
        }
        let deriv = plant.state_derivative(&state, &command, t)?;
        let imu = imu_sample(&state, &deriv, cfg.gravity, &mut noise);
        let input = ControllerInput {
            t,
            p: state.p,
            v: state.v,
            q: state.q,
            imu,
            rotors: RotorSpeeds(state.rotors),
            rotors_t: t,
        };
        let out = controller.tick(&input)?;
        if k % cfg.log_every == 0 {
            let dist = plant.disturbances(&state)?;
            log.rows.push(LogRow::new(t, &state, &out, &dist, h));
        }
        if k == ticks {
            break;
        }
        command = out.rotors;
        for i in 0..steps {
            {
                let s = plant.step(&state, &command, t + i as f64 * cfg.dt, cfg.dt)?;
                state = s
            }
        }
    }
    Ok(log)
}
