//! Differential-flatness references under the ground-effect models.
//!
//! From position derivatives up to snap and yaw up to its second derivative
//! the pipeline recovers thrust, attitude, body rates, body angular
//! acceleration, feedforward torque and rotor speeds.
//!
//! The force balance solved for the body z axis is
//!
//! ```text
//! c·z_B = a + g·z_W + (d_x/m)(x_Bᵀv)·x_B + (d_y/m)(y_Bᵀv)·y_B,
//! c     = T·(1 + F_G(h)) / m
//! ```
//!
//! with `D(h)` frozen over the differentiation, so every rate quantity comes
//! from the derivatives of this identity. `F_G` only rescales the collective
//! `c` into thrust, so it never reaches the body rates.

use std::f64::consts::SQRT_2;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::groundfx::GroundEffectParams;
use crate::vehicle::{Mixer, RotorSpeeds, VehicleParams};

/// Position derivatives through snap plus yaw and its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatOutput {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub j: Vector3<f64>,
    pub s: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_acc: f64,
}

impl FlatOutput {
    pub fn hover(p: Vector3<f64>, yaw: f64) -> Self {
        Self {
            p,
            v: Vector3::zeros(),
            a: Vector3::zeros(),
            j: Vector3::zeros(),
            s: Vector3::zeros(),
            yaw,
            yaw_rate: 0.0,
            yaw_acc: 0.0,
        }
    }
}

/// Gerono lemniscate in the horizontal plane at constant altitude:
/// `x = a·sin θ`, `y = (a/2)·sin 2θ`, `θ = Ω·t`. At `t = 0` the vehicle sits
/// on the crossing point moving at its peak speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemniscate {
    pub center: Vector3<f64>,
    pub half_width: f64,
    pub peak_speed: f64,
}

impl Lemniscate {
    pub fn new(center: Vector3<f64>, half_width: f64, peak_speed: f64) -> Result<Self> {
        if !(half_width > 0.0) || !(peak_speed > 0.0) {
            return Err(Error::Parameter("lemniscate half width and speed must be positive".into()));
        }
        Ok(Self {
            center,
            half_width,
            peak_speed,
        })
    }

    /// Angular rate Ω; the speed `a·Ω·√(cos²θ + cos²2θ)` peaks at `√2·a·Ω`.
    pub fn rate(&self) -> f64 {
        self.peak_speed / (SQRT_2 * self.half_width)
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.rate()
    }

    pub fn sample(&self, t: f64) -> FlatOutput {
        let a = self.half_width;
        let w = self.rate();
        let theta = w * t;
        // k-th derivative of sin(kθ·t) via phase shifts.
        let d = |k: i32| {
            let shift = k as f64 * std::f64::consts::FRAC_PI_2;
            Vector3::new(
                a * w.powi(k) * (theta + shift).sin(),
                0.5 * a * (2.0 * w).powi(k) * (2.0 * theta + shift).sin(),
                0.0,
            )
        };
        FlatOutput {
            p: self.center + d(0),
            v: d(1),
            a: d(2),
            j: d(3),
            s: d(4),
            yaw: 0.0,
            yaw_rate: 0.0,
            yaw_acc: 0.0,
        }
    }
}

/// Vertical move between two altitudes along the degree-9 smoothstep
/// `126τ⁵ − 420τ⁶ + 540τ⁷ − 315τ⁸ + 70τ⁹`, whose first four derivatives
/// vanish at both ends. Holds the end point afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoverDescent {
    pub xy: (f64, f64),
    pub z_start: f64,
    pub z_end: f64,
    pub duration: f64,
    /// Time at which the descent begins; the start altitude is held before.
    pub start: f64,
}

const SMOOTHSTEP9: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0];

fn poly_derivs(coeffs: &[f64], x: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (n, c) in coeffs.iter().enumerate().skip(k) {
            let falling: f64 = (0..k).map(|i| (n - i) as f64).product();
            acc += c * falling * x.powi((n - k) as i32);
        }
        *o = acc;
    }
    out
}

impl HoverDescent {
    pub fn new(xy: (f64, f64), z_start: f64, z_end: f64, duration: f64, min_clearance: f64) -> Result<Self> {
        if !(z_start > z_end) || z_end < min_clearance || !(duration > 0.0) {
            return Err(Error::Parameter(format!(
                "hover descent needs start > end >= {min_clearance} and a positive duration (start {z_start}, end {z_end}, duration {duration})"
            )));
        }
        Ok(Self {
            xy,
            z_start,
            z_end,
            duration,
            start: 0.0,
        })
    }

    pub fn with_start(self, start: f64) -> Self {
        Self { start, ..self }
    }

    /// Largest vertical speed, reached half-way: `(630/256)·Δz/duration`.
    pub fn peak_speed(&self) -> f64 {
        630.0 / 256.0 * (self.z_start - self.z_end) / self.duration
    }

    pub fn sample(&self, t: f64) -> FlatOutput {
        let t = t - self.start;
        let tau = (t / self.duration).clamp(0.0, 1.0);
        let inside = t > 0.0 && t < self.duration;
        let s = poly_derivs(&SMOOTHSTEP9, tau);
        let dz = self.z_end - self.z_start;
        let scale = |k: usize| {
            if k == 0 {
                self.z_start + dz * s[0]
            } else if inside {
                dz * s[k] / self.duration.powi(k as i32)
            } else {
                0.0
            }
        };
        let col = |k: usize| Vector3::new(if k == 0 { self.xy.0 } else { 0.0 }, if k == 0 { self.xy.1 } else { 0.0 }, scale(k));
        FlatOutput {
            p: col(0),
            v: col(1),
            a: col(2),
            j: col(3),
            s: col(4),
            yaw: 0.0,
            yaw_rate: 0.0,
            yaw_acc: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Trajectory {
    Hover { p: Vector3<f64>, yaw: f64 },
    Lemniscate(Lemniscate),
    HoverDescent(HoverDescent),
}

impl Trajectory {
    pub fn sample(&self, t: f64) -> FlatOutput {
        match self {
            Trajectory::Hover { p, yaw } => FlatOutput::hover(*p, *yaw),
            Trajectory::Lemniscate(l) => l.sample(t),
            Trajectory::HoverDescent(d) => d.sample(t),
        }
    }
}

/// Model knowledge available to the reference pipeline. Each flag removes
/// one ground-effect term, so an uncompensated controller can use the same
/// code with a plain free-air model.
#[derive(Clone, Debug)]
pub struct FlatModel {
    pub vehicle: VehicleParams,
    pub ground: GroundEffectParams,
    pub gravity: f64,
    pub use_thrust_model: bool,
    pub use_drag_model: bool,
    pub use_equivalent_inertia: bool,
    /// Include `−m·c·F_G'(h)·ḣ/(1+F_G)²` in the thrust rate.
    pub thrust_rate_height_term: bool,
    mixer: Mixer,
}

impl FlatModel {
    pub fn new(vehicle: VehicleParams, ground: GroundEffectParams, gravity: f64) -> Result<Self> {
        let mixer = Mixer::new(&vehicle)?;
        ground.validate()?;
        Ok(Self {
            vehicle,
            ground,
            gravity,
            use_thrust_model: true,
            use_drag_model: true,
            use_equivalent_inertia: true,
            thrust_rate_height_term: true,
            mixer,
        })
    }

    /// Same vehicle, every ground-effect term switched off.
    pub fn free_air(&self) -> Self {
        Self {
            use_thrust_model: false,
            use_drag_model: false,
            use_equivalent_inertia: false,
            ..self.clone()
        }
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    fn fg(&self, h: f64) -> Result<f64> {
        if self.use_thrust_model {
            self.ground.fg(h.max(0.0))
        } else {
            Ok(0.0)
        }
    }

    /// Drag per unit mass `(d_x/m, d_y/m)`.
    fn drag_per_mass(&self, h: f64) -> (f64, f64) {
        if self.use_drag_model {
            let (dx, dy) = self.ground.drag.lookup(h.max(0.0));
            (dx / self.vehicle.mass, dy / self.vehicle.mass)
        } else {
            (0.0, 0.0)
        }
    }

    /// Inertia used for feedforward torque.
    pub fn inertia(&self, h: f64, thrust: f64) -> Result<Matrix3<f64>> {
        if self.use_equivalent_inertia {
            self.ground.equivalent_inertia(h.max(0.0), Some(thrust), &self.vehicle)
        } else {
            Ok(self.vehicle.inertia)
        }
    }

    fn height(&self, flat: &FlatOutput) -> f64 {
        self.vehicle.rotor_height(flat.p.z)
    }
}

/// Reference states and inputs at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatReference {
    pub flat: FlatOutput,
    /// Rotor-plane height of the reference.
    pub h: f64,
    pub thrust: f64,
    pub thrust_rate: f64,
    /// Collective specific thrust including ground effect, `T(1+F_G)/m`.
    pub collective: f64,
    pub attitude: UnitQuaternion<f64>,
    pub omega: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub rotors: RotorSpeeds,
    /// Reference rotor speeds fall outside `[0, n_max]`.
    pub infeasible: bool,
    pub iterations: usize,
}

fn heading_axes(yaw: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (s, c) = yaw.sin_cos();
    (Vector3::new(c, s, 0.0), Vector3::new(-s, c, 0.0))
}

fn frame_from_z(z_b: &Vector3<f64>, yaw: f64) -> Result<Matrix3<f64>> {
    let (_, y_c) = heading_axes(yaw);
    let x = y_c.cross(z_b);
    let n = x.norm();
    if n < 1e-9 {
        return Err(Error::Reference("body z axis is horizontal; heading undefined".into()));
    }
    let x_b = x / n;
    let y_b = z_b.cross(&x_b);
    Ok(Matrix3::from_columns(&[x_b, y_b, *z_b]))
}

/// Thrust and attitude. The body axis solves the drag-coupled force balance
/// by fixed-point iteration (tolerance 1e-10, at most 20 sweeps).
pub fn ref_thrust_attitude(flat: &FlatOutput, model: &FlatModel) -> Result<(f64, UnitQuaternion<f64>, usize)> {
    let (r, c, iters) = solve_frame(flat, model)?;
    let fg = model.fg(model.height(flat))?;
    let thrust = model.vehicle.mass * c / (1.0 + fg);
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Ok((thrust, q, iters))
}

const MAX_ITERATIONS: usize = 20;
const Z_TOLERANCE: f64 = 1e-10;

fn solve_frame(flat: &FlatOutput, model: &FlatModel) -> Result<(Matrix3<f64>, f64, usize)> {
    let alpha = flat.a + model.gravity * Vector3::z();
    if alpha.norm() < 1e-9 {
        return Err(Error::Reference("free fall: a + g·z_W vanishes".into()));
    }
    let (da, db) = model.drag_per_mass(model.height(flat));
    let mut z = alpha.normalize();
    let mut r = frame_from_z(&z, flat.yaw)?;
    let mut iters = 0;
    if da != 0.0 || db != 0.0 {
        loop {
            iters += 1;
            let x_b: Vector3<f64> = r.column(0).into();
            let y_b: Vector3<f64> = r.column(1).into();
            let rhs = alpha + da * x_b.dot(&flat.v) * x_b + db * y_b.dot(&flat.v) * y_b;
            let z_next = rhs.normalize();
            let step = (z_next - z).norm();
            z = z_next;
            r = frame_from_z(&z, flat.yaw)?;
            if step < Z_TOLERANCE {
                break;
            }
            if iters >= MAX_ITERATIONS {
                return Err(Error::Reference(format!(
                    "body-axis iteration did not converge in {MAX_ITERATIONS} sweeps (last step {step:e})"
                )));
            }
        }
    }
    Ok((r, z.dot(&alpha), iters))
}

/// Residual of the drag-coupled force balance for a candidate frame.
pub fn force_balance_residual(flat: &FlatOutput, r: &Matrix3<f64>, collective: f64, model: &FlatModel) -> Vector3<f64> {
    let (da, db) = model.drag_per_mass(model.height(flat));
    let x_b: Vector3<f64> = r.column(0).into();
    let y_b: Vector3<f64> = r.column(1).into();
    let z_b: Vector3<f64> = r.column(2).into();
    collective * z_b
        - (flat.a + model.gravity * Vector3::z())
        - da * x_b.dot(&flat.v) * x_b
        - db * y_b.dot(&flat.v) * y_b
}

/// First and second time derivatives of a body-fixed unit axis `R·e`.
fn axis_rates(r: &Matrix3<f64>, w: &Vector3<f64>, w_dot: &Vector3<f64>, e: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let d1 = r * w.cross(e);
    let d2 = r * (w.cross(&w.cross(e)) + w_dot.cross(e));
    (d1, d2)
}

/// Solve `g(u) = 0` for an affine `g: ℝ⁴ → ℝ⁴` by probing unit vectors.
fn solve_affine(g: impl Fn(&Vector4<f64>) -> Vector4<f64>) -> Result<Vector4<f64>> {
    let g0 = g(&Vector4::zeros());
    let mut a = Matrix4::zeros();
    for i in 0..4 {
        let mut e = Vector4::zeros();
        e[i] = 1.0;
        a.set_column(i, &(g(&e) - g0));
    }
    a.lu()
        .solve(&(-g0))
        .ok_or_else(|| Error::Reference("rate equations are singular".into()))
}

struct RateSolution {
    omega: Vector3<f64>,
    omega_dot: Vector3<f64>,
    c_dot: f64,
}

fn solve_rates(flat: &FlatOutput, model: &FlatModel, r: &Matrix3<f64>, c: f64) -> Result<RateSolution> {
    let (da, db) = model.drag_per_mass(model.height(flat));
    let (ex, ey, ez) = (Vector3::x(), Vector3::y(), Vector3::z());
    let x_b = r * ex;
    let y_b = r * ey;
    let z_b = r * ez;
    let (x_c, y_c) = heading_axes(flat.yaw);
    let y_c_dot = -flat.yaw_rate * x_c;
    let y_c_ddot = -flat.yaw_acc * x_c - flat.yaw_rate * flat.yaw_rate * y_c;
    let v = flat.v;
    let a = flat.a;
    let zero = Vector3::zeros();

    // First derivative of the force balance and of x_Bᵀy_C = 0.
    let first = |u: &Vector4<f64>| {
        let w = Vector3::new(u[0], u[1], u[2]);
        let c_dot = u[3];
        let (xd, _) = axis_rates(r, &w, &zero, &ex);
        let (yd, _) = axis_rates(r, &w, &zero, &ey);
        let (zd, _) = axis_rates(r, &w, &zero, &ez);
        let e = c_dot * z_b + c * zd
            - flat.j
            - da * ((xd.dot(&v) + x_b.dot(&a)) * x_b + x_b.dot(&v) * xd)
            - db * ((yd.dot(&v) + y_b.dot(&a)) * y_b + y_b.dot(&v) * yd);
        let yaw = xd.dot(&y_c) + x_b.dot(&y_c_dot);
        Vector4::new(e.x, e.y, e.z, yaw)
    };
    let u1 = solve_affine(first)?;
    let w = Vector3::new(u1[0], u1[1], u1[2]);
    let c_dot = u1[3];
    let (xd, _) = axis_rates(r, &w, &zero, &ex);
    let (yd, _) = axis_rates(r, &w, &zero, &ey);
    let (zd, _) = axis_rates(r, &w, &zero, &ez);

    let second = |u: &Vector4<f64>| {
        let wd = Vector3::new(u[0], u[1], u[2]);
        let c_ddot = u[3];
        let (_, xdd) = axis_rates(r, &w, &wd, &ex);
        let (_, ydd) = axis_rates(r, &w, &wd, &ey);
        let (_, zdd) = axis_rates(r, &w, &wd, &ez);
        let drag_term = |b: &Vector3<f64>, bd: &Vector3<f64>, bdd: &Vector3<f64>| {
            (bdd.dot(&v) + 2.0 * bd.dot(&a) + b.dot(&flat.j)) * b + 2.0 * (bd.dot(&v) + b.dot(&a)) * bd + b.dot(&v) * bdd
        };
        let e = c_ddot * z_b + 2.0 * c_dot * zd + c * zdd
            - flat.s
            - da * drag_term(&x_b, &xd, &xdd)
            - db * drag_term(&y_b, &yd, &ydd);
        let yaw = xdd.dot(&y_c) + 2.0 * xd.dot(&y_c_dot) + x_b.dot(&y_c_ddot);
        Vector4::new(e.x, e.y, e.z, yaw)
    };
    let u2 = solve_affine(second)?;
    Ok(RateSolution {
        omega: w,
        omega_dot: Vector3::new(u2[0], u2[1], u2[2]),
        c_dot,
    })
}

/// Body rates and body angular acceleration of the reference.
pub fn ref_rates(flat: &FlatOutput, model: &FlatModel) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (r, c, _) = solve_frame(flat, model)?;
    let s = solve_rates(flat, model, &r, c)?;
    Ok((s.omega, s.omega_dot))
}

/// `τ = J'·ω̇ + ω × J'·ω`.
pub fn ref_torque(omega: &Vector3<f64>, omega_dot: &Vector3<f64>, inertia: &Matrix3<f64>) -> Vector3<f64> {
    inertia * omega_dot + omega.cross(&(inertia * omega))
}

/// Full reference at one instant.
pub fn flat_reference(flat: &FlatOutput, model: &FlatModel) -> Result<FlatReference> {
    let h = model.height(flat);
    let (r, c, iterations) = solve_frame(flat, model)?;
    let rates = solve_rates(flat, model, &r, c)?;
    let m = model.vehicle.mass;
    let fg = model.fg(h)?;
    let thrust = m * c / (1.0 + fg);
    let mut thrust_rate = m * rates.c_dot / (1.0 + fg);
    if model.thrust_rate_height_term && model.use_thrust_model && h > 0.0 {
        thrust_rate -= m * c * model.ground.fg_prime(h)? * flat.v.z / ((1.0 + fg) * (1.0 + fg));
    }
    let inertia = model.inertia(h, thrust)?;
    let torque = ref_torque(&rates.omega, &rates.omega_dot, &inertia);
    let n2 = model.mixer.squared_for(thrust, &torque);
    let rotors = RotorSpeeds::from_squared(&n2);
    let infeasible = n2.iter().any(|x| *x < 0.0) || !rotors.within_limit(model.vehicle.n_max);
    Ok(FlatReference {
        flat: *flat,
        h,
        thrust,
        thrust_rate,
        collective: c,
        attitude: UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
        omega: rates.omega,
        omega_dot: rates.omega_dot,
        torque,
        rotors,
        infeasible,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GRAVITY;
    use approx::assert_relative_eq;

    fn model() -> FlatModel {
        FlatModel::new(VehicleParams::default(), GroundEffectParams::default(), GRAVITY).unwrap()
    }

    fn fd5(f: impl Fn(f64) -> Vector3<f64>, t: f64, h: f64) -> Vector3<f64> {
        (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn lemniscate_anchor_and_peak_speed() {
        let l = Lemniscate::new(Vector3::new(0.0, 0.0, 0.12), 1.0, 1.0).unwrap();
        let f = l.sample(0.0);
        assert_eq!(f.p, Vector3::new(0.0, 0.0, 0.12));
        assert!(f.v.norm() > 0.5);
        let n = 200_000;
        let peak = (0..n)
            .map(|i| l.sample(l.period() * i as f64 / n as f64).v.norm())
            .fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-6, "{peak}");
    }

    #[test]
    fn lemniscate_derivatives_match_finite_differences() {
        let l = Lemniscate::new(Vector3::new(0.3, -0.2, 0.5), 0.8, 1.0).unwrap();
        let h = 1e-3;
        for &t in &[0.0, 0.7, 2.3, 4.1] {
            let f = l.sample(t);
            let checks = [
                (fd5(|s| l.sample(s).p, t, h), f.v),
                (fd5(|s| l.sample(s).v, t, h), f.a),
                (fd5(|s| l.sample(s).a, t, h), f.j),
                (fd5(|s| l.sample(s).j, t, h), f.s),
            ];
            for (num, ana) in checks {
                assert!((num - ana).norm() <= 1e-6 * ana.norm().max(1.0), "t={t}: {num} vs {ana}");
            }
        }
    }

    #[test]
    fn hover_descent_boundaries_and_peak() {
        let d = HoverDescent::new((0.0, 0.0), 1.0, 0.1, 10.0, 0.05).unwrap();
        let s0 = d.sample(0.0);
        assert_eq!(s0.p.z, 1.0);
        assert_eq!(s0.v, Vector3::zeros());
        let s1 = d.sample(10.0);
        assert_relative_eq!(s1.p.z, 0.1, epsilon = 1e-12);
        assert_eq!(s1.v, Vector3::zeros());
        let peak = (0..=10_000).map(|i| d.sample(i as f64 * 1e-3).v.z.abs()).fold(0.0, f64::max);
        assert_relative_eq!(peak, d.peak_speed(), max_relative = 1e-9);
        assert_relative_eq!(d.peak_speed(), 630.0 / 256.0 * 0.9 / 10.0, max_relative = 1e-12);
        assert!(HoverDescent::new((0.0, 0.0), 0.1, 1.0, 10.0, 0.05).is_err());
        assert!(HoverDescent::new((0.0, 0.0), 1.0, 0.01, 10.0, 0.05).is_err());
    }

    #[test]
    fn hover_descent_derivatives_are_consistent() {
        let d = HoverDescent::new((0.0, 0.0), 1.0, 0.1, 4.0, 0.05).unwrap();
        for &t in &[0.5, 1.3, 2.0, 3.7] {
            let f = d.sample(t);
            assert!((fd5(|s| d.sample(s).p, t, 1e-3) - f.v).norm() < 1e-8);
            assert!((fd5(|s| d.sample(s).a, t, 1e-3) - f.j).norm() < 1e-7);
            assert!((fd5(|s| d.sample(s).j, t, 1e-3) - f.s).norm() < 1e-6);
        }
    }

    #[test]
    fn static_hover_out_of_ground_effect() {
        let m = model();
        let r = flat_reference(&FlatOutput::hover(Vector3::new(0.0, 0.0, 2.0), 0.0), &m).unwrap();
        let fg = m.ground.fg(2.0).unwrap();
        assert_relative_eq!(r.thrust, GRAVITY / (1.0 + fg), max_relative = 1e-12);
        assert!(r.attitude.angle() < 1e-12);
        assert_eq!(r.omega, Vector3::zeros());
        assert_eq!(r.omega_dot, Vector3::zeros());
        assert!(r.torque.norm() < 1e-15);
        let free = m.free_air();
        let r = flat_reference(&FlatOutput::hover(Vector3::new(0.0, 0.0, 2.0), 0.0), &free).unwrap();
        assert_relative_eq!(r.thrust, GRAVITY, max_relative = 1e-12);
    }

    #[test]
    fn hover_thrust_divides_by_ground_effect_factor() {
        let mut m = model();
        // Choose g2 so that F_G(0.3) = 0.25.
        m.ground.g2 = 0.25 * (0.09 + 0.09);
        let (t, _, _) = ref_thrust_attitude(&FlatOutput::hover(Vector3::new(0.0, 0.0, 0.3), 0.0), &m).unwrap();
        assert_relative_eq!(t, GRAVITY / 1.25, max_relative = 1e-12);
    }

    #[test]
    fn forward_flight_satisfies_force_balance() {
        let m = model();
        let mut f = FlatOutput::hover(Vector3::new(0.0, 0.0, 0.12), 0.3);
        f.v = Vector3::new(1.0, 0.0, 0.0);
        f.a = Vector3::new(0.5, -0.2, 0.0);
        let (r, c, iters) = solve_frame(&f, &m).unwrap();
        assert!(iters > 1 && iters <= MAX_ITERATIONS);
        assert!(force_balance_residual(&f, &r, c, &m).norm() < 1e-9);
        let x_b: Vector3<f64> = r.column(0).into();
        assert!(x_b.dot(&heading_axes(0.3).1).abs() < 1e-12);
    }

    #[test]
    fn drag_free_model_is_classic_map() {
        let m = model().free_air();
        let mut f = FlatOutput::hover(Vector3::new(0.0, 0.0, 0.12), 0.0);
        f.v = Vector3::new(1.0, 0.5, 0.0);
        f.a = Vector3::new(1.0, 2.0, -0.5);
        let (t, q, _) = ref_thrust_attitude(&f, &m).unwrap();
        let alpha = f.a + GRAVITY * Vector3::z();
        assert_relative_eq!(t, alpha.norm(), max_relative = 1e-12);
        assert_relative_eq!(q * Vector3::z(), alpha.normalize(), epsilon = 1e-12);
    }

    #[test]
    fn rates_match_finite_differences_of_attitude() {
        let m = model();
        let l = Lemniscate::new(Vector3::new(0.0, 0.0, 0.15), 1.0, 1.5).unwrap();
        let traj = |t: f64| {
            let mut f = l.sample(t);
            f.yaw = 0.3 * t.sin();
            f.yaw_rate = 0.3 * t.cos();
            f.yaw_acc = -0.3 * t.sin();
            f
        };
        let h = 1e-4;
        for &t in &[0.2, 1.1, 2.5, 3.9] {
            let r = flat_reference(&traj(t), &m).unwrap();
            let qp = flat_reference(&traj(t + h), &m).unwrap().attitude;
            let qm = flat_reference(&traj(t - h), &m).unwrap().attitude;
            // Body rate from the relative rotation across the interval.
            let w_fd = (qm.inverse() * qp).scaled_axis() / (2.0 * h);
            assert!((w_fd - r.omega).norm() < 1e-4, "t={t}: {w_fd} vs {}", r.omega);

            let wp = flat_reference(&traj(t + h), &m).unwrap().omega;
            let wm = flat_reference(&traj(t - h), &m).unwrap().omega;
            let wd_fd = (wp - wm) / (2.0 * h);
            assert!((wd_fd - r.omega_dot).norm() < 1e-3, "t={t}: {wd_fd} vs {}", r.omega_dot);
        }
    }

    #[test]
    fn torque_gyroscopic_term_expanded() {
        let j = Matrix3::new(5e-3, 1e-4, 0.0, 1e-4, 6e-3, 2e-4, 0.0, 2e-4, 9e-3);
        let w = Vector3::new(0.3, -1.2, 2.0);
        let jw = j * w;
        let expected = Vector3::new(w.y * jw.z - w.z * jw.y, w.z * jw.x - w.x * jw.z, w.x * jw.y - w.y * jw.x);
        assert_relative_eq!(ref_torque(&w, &Vector3::zeros(), &j), expected, epsilon = 1e-15);
        assert_eq!(ref_torque(&Vector3::zeros(), &Vector3::zeros(), &j), Vector3::zeros());
    }

    #[test]
    fn far_from_ground_torque_uses_plain_inertia() {
        let m = model();
        let ji = m.inertia(10.0, 9.81).unwrap();
        assert!((ji - m.vehicle.inertia).norm() < 1e-9);
    }

    #[test]
    fn reference_rotor_speeds_are_feasible_for_nominal_lemniscate() {
        let m = model();
        let l = Lemniscate::new(Vector3::new(0.0, 0.0, 0.12), 1.0, 1.0).unwrap();
        for i in 0..200 {
            let r = flat_reference(&l.sample(i as f64 * 0.05), &m).unwrap();
            assert!(!r.infeasible);
            assert!(r.iterations <= MAX_ITERATIONS);
        }
    }

    #[test]
    fn thrust_rate_matches_finite_difference() {
        let m = model();
        let d = HoverDescent::new((0.0, 0.0), 0.6, 0.1, 3.0, 0.05).unwrap();
        let t = 1.4;
        let h = 1e-4;
        let r = flat_reference(&d.sample(t), &m).unwrap();
        let tp = flat_reference(&d.sample(t + h), &m).unwrap().thrust;
        let tm = flat_reference(&d.sample(t - h), &m).unwrap().thrust;
        assert!(((tp - tm) / (2.0 * h) - r.thrust_rate).abs() < 1e-5);
    }
}
