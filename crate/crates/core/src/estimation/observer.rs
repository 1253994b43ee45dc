use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::filter::{LowPass, LowPass3};
use crate::error::Result;

/// One synchronous sample of everything the observer consumes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverInput {
    pub t: f64,
    pub q: UnitQuaternion<f64>,
    /// IMU specific force, body frame.
    pub specific_force: Vector3<f64>,
    pub gyro: Vector3<f64>,
    /// Thrust and body torque implied by the measured rotor speeds.
    pub thrust: f64,
    pub torque_b: Vector3<f64>,
    /// Disturbance predicted by the model (world acceleration, body torque);
    /// subtracted after identical filtering to form the residual.
    pub model_accel: Vector3<f64>,
    pub model_torque: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WrenchEstimate {
    pub t: f64,
    /// External acceleration, world frame.
    pub accel: Vector3<f64>,
    /// External torque, body frame.
    pub torque: Vector3<f64>,
    pub accel_residual: Vector3<f64>,
    pub torque_residual: Vector3<f64>,
    pub omega_f: Vector3<f64>,
    pub omega_dot_f: Vector3<f64>,
    /// Filtered applied torque, aligned with `omega_dot_f`.
    pub torque_b_f: Vector3<f64>,
    pub thrust_f: f64,
}

/// External wrench observer
///
/// ```text
/// ã_ext = R·f_imu,f − z_B·T_f/m
/// τ̃_ext = J·ω̇_f + ω_f × J·ω_f − τ_B,f
/// ```
///
/// `ω̇` is the backward difference of the gyro, which lives at the middle of
/// the sample interval; the torque-side terms are averaged over the same
/// interval before filtering so both sides stay aligned.
#[derive(Clone, Debug)]
pub struct WrenchObserver {
    dt: f64,
    mass: f64,
    inertia: Matrix3<f64>,
    accel: LowPass3,
    accel_model: LowPass3,
    thrust: LowPass,
    omega: LowPass3,
    omega_mid: LowPass3,
    omega_dot: LowPass3,
    torque_b: LowPass3,
    torque_model: LowPass3,
    last: Option<ObserverInput>,
    estimate: WrenchEstimate,
    dropped: usize,
}

impl WrenchObserver {
    pub fn new(cutoff_hz: f64, dt: f64, mass: f64, inertia: Matrix3<f64>) -> Result<Self> {
        let v = LowPass3::new(cutoff_hz, dt)?;
        Ok(Self {
            dt,
            mass,
            inertia,
            accel: v,
            accel_model: v,
            thrust: LowPass::new(cutoff_hz, dt)?,
            omega: v,
            omega_mid: v,
            omega_dot: v,
            torque_b: v,
            torque_model: v,
            last: None,
            estimate: WrenchEstimate::default(),
            dropped: 0,
        })
    }

    pub fn estimate(&self) -> &WrenchEstimate {
        &self.estimate
    }

    /// Samples discarded because their timestamp did not follow the
    /// previous one by one period.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn update(&mut self, x: &ObserverInput) -> WrenchEstimate {
        let accel_raw = x.q * x.specific_force - x.q * Vector3::z() * x.thrust / self.mass;
        let Some(prev) = self.last else {
            self.accel.reset(accel_raw);
            self.accel_model.reset(x.model_accel);
            self.thrust.reset(x.thrust);
            self.omega.reset(x.gyro);
            self.omega_mid.reset(x.gyro);
            self.omega_dot.reset(Vector3::zeros());
            let gyro_torque = x.gyro.cross(&(self.inertia * x.gyro));
            self.torque_b.reset(x.torque_b - gyro_torque);
            self.torque_model.reset(x.model_torque - gyro_torque);
            self.last = Some(*x);
            self.estimate = self.compose(x.t);
            return self.estimate;
        };
        let gap = x.t - prev.t;
        if (gap - self.dt).abs() > 1e-6 * self.dt.max(1e-3) {
            ::log::warn!(
                "observer sample at t = {:.6} is {:.3e} s after the previous one (expected {:.3e}); dropped",
                x.t,
                gap,
                self.dt
            );
            self.dropped += 1;
            return self.estimate;
        }
        self.accel.update(&accel_raw);
        self.accel_model.update(&x.model_accel);
        self.thrust.update(x.thrust);
        self.omega.update(&x.gyro);
        self.omega_mid.update(&(0.5 * (x.gyro + prev.gyro)));
        self.omega_dot.update(&((x.gyro - prev.gyro) / self.dt));
        self.torque_b.update(&(0.5 * (x.torque_b + prev.torque_b)));
        self.torque_model.update(&(0.5 * (x.model_torque + prev.model_torque)));
        self.last = Some(*x);
        self.estimate = self.compose(x.t);
        self.estimate
    }

    fn compose(&self, t: f64) -> WrenchEstimate {
        let w = self.omega_mid.value();
        let wd = self.omega_dot.value();
        let torque = self.inertia * wd + w.cross(&(self.inertia * w)) - self.torque_b.value();
        let accel = self.accel.value();
        WrenchEstimate {
            t,
            accel,
            torque,
            accel_residual: accel - self.accel_model.value(),
            torque_residual: torque - self.torque_model.value(),
            omega_f: self.omega.value(),
            omega_dot_f: wd,
            torque_b_f: self.torque_b.value(),
            thrust_f: self.thrust.value(),
        }
    }
}
