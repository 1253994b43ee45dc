//! Vehicle parameters, the quadrotor mixing matrix and rotor-speed
//! conversions.
//!
//! Rotor layout (body frame, x forward, y left, z up), derived from the sign
//! pattern of the mixing matrix with `l = √2·b/4`:
//!
//! | rotor | position   | yaw reaction |
//! |-------|------------|--------------|
//! | 1     | (+l, −l)   | −            |
//! | 2     | (−l, +l)   | −            |
//! | 3     | (+l, +l)   | +            |
//! | 4     | (−l, −l)   | +            |

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::GRAVITY;

/// Sign pattern mapping squared rotor speeds to (thrust, roll, pitch, yaw).
#[rustfmt::skip]
pub const SIGN_MATRIX: [[f64; 4]; 4] = [
    [ 1.0,  1.0,  1.0,  1.0],
    [-1.0,  1.0,  1.0, -1.0],
    [-1.0,  1.0, -1.0,  1.0],
    [-1.0, -1.0,  1.0,  1.0],
];

pub fn sign_matrix() -> Matrix4<f64> {
    Matrix4::from_fn(|r, c| SIGN_MATRIX[r][c])
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg·m², symmetric positive definite
    pub inertia: Matrix3<f64>,
    /// Distance between diagonal rotors (m).
    pub wheelbase: f64,
    /// Thrust coefficient (N/rpm²).
    pub k_t: f64,
    /// Roll torque coefficient (N/rpm²).
    pub k_tx: f64,
    /// Pitch torque coefficient (N/rpm²).
    pub k_ty: f64,
    /// Reaction (yaw) torque coefficient (N·m/rpm²).
    pub k_i: f64,
    /// rpm
    pub n_max: f64,
    /// Height of the rotor plane above the body origin (m).
    pub rotor_plane_offset: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let mass = 1.0;
        let n_max = 20_000.0;
        let n_hover = 0.6 * n_max;
        let k_t = mass * GRAVITY / (4.0 * n_hover * n_hover);
        Self {
            mass,
            inertia: Matrix3::from_diagonal(&Vector3::new(5e-3, 5e-3, 9e-3)),
            wheelbase: 0.30,
            k_t,
            k_tx: k_t,
            k_ty: k_t,
            k_i: 0.016 * k_t,
            n_max,
            rotor_plane_offset: 0.0,
        }
    }
}

pub const VEHICLE_KEYS: &[&str] = &[
    "mass",
    "inertia",
    "wheelbase",
    "k_t",
    "k_tx",
    "k_ty",
    "k_i",
    "n_max",
    "rotor_plane_offset",
];

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("wheelbase", self.wheelbase),
            ("k_t", self.k_t),
            ("k_tx", self.k_tx),
            ("k_ty", self.k_ty),
            ("k_i", self.k_i),
            ("n_max", self.n_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if (self.inertia - self.inertia.transpose()).abs().max() > 1e-12 {
            return Err(Error::Parameter("inertia must be symmetric".into()));
        }
        if self.inertia.cholesky().is_none() {
            return Err(Error::Parameter("inertia must be positive definite".into()));
        }
        if !self.rotor_plane_offset.is_finite() {
            return Err(Error::Parameter("rotor_plane_offset must be finite".into()));
        }
        Ok(())
    }

    /// Reads the keys in [`VEHICLE_KEYS`]; missing keys keep their defaults.
    /// `inertia` accepts either a diagonal (3 values) or
    /// `xx, yy, zz, xy, xz, yz` (6 values).
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let inertia = match cfg.get("inertia") {
            None => d.inertia,
            Some(e) => {
                let v = e.list()?;
                match v.len() {
                    3 => Matrix3::from_diagonal(&Vector3::new(v[0], v[1], v[2])),
                    6 => Matrix3::new(v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2]),
                    n => return Err(e.error(format!("expected 3 or 6 values, got {n}"))),
                }
            }
        };
        let k_t = cfg.f64_or("k_t", d.k_t)?;
        let p = Self {
            mass: cfg.f64_or("mass", d.mass)?,
            inertia,
            wheelbase: cfg.f64_or("wheelbase", d.wheelbase)?,
            k_t,
            k_tx: cfg.f64_or("k_tx", k_t)?,
            k_ty: cfg.f64_or("k_ty", k_t)?,
            k_i: cfg.f64_or("k_i", d.k_i)?,
            n_max: cfg.f64_or("n_max", d.n_max)?,
            rotor_plane_offset: cfg.f64_or("rotor_plane_offset", d.rotor_plane_offset)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// Lever arm of each rotor about the roll and pitch axes.
    pub fn arm(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.wheelbase / 4.0
    }

    /// Height of the rotor plane above the ground for a body at altitude `z`.
    pub fn rotor_height(&self, z: f64) -> f64 {
        z + self.rotor_plane_offset
    }

    /// Per-rotor speed giving total thrust `thrust` with equal speeds.
    pub fn equal_speed_for_thrust(&self, thrust: f64) -> f64 {
        (thrust.max(0.0) / (4.0 * self.k_t)).sqrt()
    }

    /// Torque produced by one rotor at hover thrust acting on its arm; a
    /// natural scale for body torques.
    pub fn hover_torque_scale(&self) -> f64 {
        self.mass * GRAVITY / 4.0 * self.arm()
    }
}

/// Rotor speeds in rpm, each non-negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotorSpeeds(pub [f64; 4]);

impl RotorSpeeds {
    pub fn new(n: [f64; 4]) -> Result<Self> {
        if n.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input(format!("rotor speeds must be finite and >= 0, got {n:?}")));
        }
        Ok(Self(n))
    }

    pub fn equal(n: f64) -> Self {
        Self([n; 4])
    }

    pub fn zero() -> Self {
        Self([0.0; 4])
    }

    /// N², the squared-speed vector (rpm²).
    pub fn squared(&self) -> Vector4<f64> {
        Vector4::from_iterator(self.0.iter().map(|n| n * n))
    }

    /// Inverse of [`squared`](Self::squared); negative entries map to 0.
    pub fn from_squared(n2: &Vector4<f64>) -> Self {
        Self([0, 1, 2, 3].map(|i| n2[i].max(0.0).sqrt()))
    }

    pub fn within_limit(&self, n_max: f64) -> bool {
        self.0.iter().all(|n| *n <= n_max)
    }
}

/// `M = diag(k_T, l·k_TX, l·k_TY, k_I) · S` with `l = √2 b / 4`.
pub fn build_mixing_matrix(params: &VehicleParams) -> Result<Matrix4<f64>> {
    params.validate()?;
    let l = params.arm();
    let scale = Matrix4::from_diagonal(&Vector4::new(params.k_t, l * params.k_tx, l * params.k_ty, params.k_i));
    Ok(scale * sign_matrix())
}

/// Mixing matrix with its inverse cached.
#[derive(Clone, Debug)]
pub struct Mixer {
    matrix: Matrix4<f64>,
    inverse: Matrix4<f64>,
}

impl Mixer {
    pub fn new(params: &VehicleParams) -> Result<Self> {
        let matrix = build_mixing_matrix(params)?;
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| Error::Parameter("mixing matrix is singular".into()))?;
        Ok(Self { matrix, inverse })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    /// (T, τx, τy, τz) produced by the squared speeds.
    pub fn wrench(&self, squared: &Vector4<f64>) -> Vector4<f64> {
        self.matrix * squared
    }

    pub fn thrust_torque(&self, speeds: &RotorSpeeds) -> (f64, Vector3<f64>) {
        let w = self.wrench(&speeds.squared());
        (w[0], Vector3::new(w[1], w[2], w[3]))
    }

    /// Unclamped squared speeds realising a wrench; entries may be negative.
    pub fn squared_for(&self, thrust: f64, torque: &Vector3<f64>) -> Vector4<f64> {
        self.inverse * Vector4::new(thrust, torque.x, torque.y, torque.z)
    }
}

/// `T = Σ k_T n_i²`.
pub fn thrust_from_speeds(speeds: &RotorSpeeds, params: &VehicleParams) -> f64 {
    params.k_t * speeds.0.iter().map(|n| n * n).sum::<f64>()
}

/// Composite speeds `N_base = diag(k_T, k_TX, k_TY, k_I)⁻¹ · M · N²`:
/// thrust-equivalent, roll, pitch and yaw composites (rpm²).
pub fn composite_speeds(speeds: &RotorSpeeds, params: &VehicleParams) -> Vector4<f64> {
    let l = params.arm();
    Vector4::new(1.0, l, l, 1.0).component_mul(&(sign_matrix() * speeds.squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_params() -> VehicleParams {
        VehicleParams {
            k_t: 1.0,
            k_tx: 1.0,
            k_ty: 1.0,
            k_i: 1.0,
            wheelbase: 4.0 / std::f64::consts::SQRT_2,
            ..VehicleParams::default()
        }
    }

    #[test]
    fn unit_coefficients_give_the_sign_matrix() {
        let m = build_mixing_matrix(&unit_params()).unwrap();
        assert_relative_eq!(m, sign_matrix(), epsilon = 1e-15);
    }

    #[test]
    fn mixing_matrix_is_invertible() {
        let mixer = Mixer::new(&VehicleParams::default()).unwrap();
        assert!(mixer.matrix().determinant().abs() > 0.0);
        let id = mixer.matrix() * mixer.inverse();
        assert_relative_eq!(id, Matrix4::identity(), epsilon = 1e-12);
    }

    #[test]
    fn non_positive_coefficients_rejected() {
        let p = VehicleParams {
            k_tx: 0.0,
            ..VehicleParams::default()
        };
        assert!(matches!(build_mixing_matrix(&p), Err(Error::Parameter(_))));
        let p = VehicleParams {
            inertia: Matrix3::from_diagonal(&Vector3::new(1e-3, -1e-3, 1e-3)),
            ..VehicleParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn thrust_cases() {
        let p = VehicleParams::default();
        assert_eq!(thrust_from_speeds(&RotorSpeeds::zero(), &p), 0.0);
        let n0 = 9000.0;
        assert_relative_eq!(thrust_from_speeds(&RotorSpeeds::equal(n0), &p), 4.0 * p.k_t * n0 * n0, max_relative = 1e-15);
        let n = RotorSpeeds::new([100.0, 200.0, 300.0, 400.0]).unwrap();
        let oracle = p.k_t * 100.0 * 100.0 + p.k_t * 200.0 * 200.0 + p.k_t * 300.0 * 300.0 + p.k_t * 400.0 * 400.0;
        assert_relative_eq!(thrust_from_speeds(&n, &p), oracle, max_relative = 1e-14);
    }

    #[test]
    fn default_hover_is_sixty_percent() {
        let p = VehicleParams::default();
        let n = p.equal_speed_for_thrust(p.mass * GRAVITY);
        assert_relative_eq!(n / p.n_max, 0.6, max_relative = 1e-12);
    }

    #[test]
    fn composite_speed_cases() {
        let p = VehicleParams::default();
        let n0 = 5000.0;
        let nb = composite_speeds(&RotorSpeeds::equal(n0), &p);
        assert_relative_eq!(nb, Vector4::new(4.0 * n0 * n0, 0.0, 0.0, 0.0), epsilon = 1e-6);
        assert_eq!(composite_speeds(&RotorSpeeds::zero(), &p), Vector4::zeros());

        // Pure roll wrench built from the inverse mixing matrix.
        let mixer = Mixer::new(&p).unwrap();
        let n2 = mixer.squared_for(8.0, &Vector3::new(0.05, 0.0, 0.0));
        assert!(n2.iter().all(|v| *v > 0.0));
        let nb = composite_speeds(&RotorSpeeds::from_squared(&n2), &p);
        assert!(nb[0].abs() > 1.0 && nb[1].abs() > 1.0);
        assert!(nb[2].abs() < 1e-6 * nb[0] && nb[3].abs() < 1e-6 * nb[0]);
    }

    #[test]
    fn negative_speed_rejected() {
        assert!(RotorSpeeds::new([1.0, -1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn config_roundtrip_and_overrides() {
        let cfg = KvConfig::parse("mass = 1.5\ninertia = 0.01, 0.02, 0.03\nk_t = 2e-8\n").unwrap();
        let p = VehicleParams::from_config(&cfg).unwrap();
        assert_eq!(p.mass, 1.5);
        assert_eq!(p.inertia[(1, 1)], 0.02);
        assert_eq!(p.k_tx, 2e-8);
        let bad = KvConfig::parse("mass = -1\n").unwrap();
        assert!(VehicleParams::from_config(&bad).is_err());
    }

    proptest! {
        #[test]
        fn allocation_round_trip(
            kt in 1e-9f64..1e-7, ktx in 1e-9f64..1e-7, kty in 1e-9f64..1e-7, ki in 1e-11f64..1e-8,
            b in 0.1f64..1.0,
            n in proptest::array::uniform4(0.0f64..20000.0),
        ) {
            let p = VehicleParams { k_t: kt, k_tx: ktx, k_ty: kty, k_i: ki, wheelbase: b, ..VehicleParams::default() };
            let mixer = Mixer::new(&p).unwrap();
            let speeds = RotorSpeeds(n);
            let w = mixer.wrench(&speeds.squared());
            let back = mixer.wrench(&mixer.squared_for(w[0], &Vector3::new(w[1], w[2], w[3])));
            let scale = w.abs().max().max(1e-12);
            prop_assert!((back - w).abs().max() <= 1e-9 * scale);
            // Composite thrust channel times k_T is the thrust.
            let nb = composite_speeds(&speeds, &p);
            let t = thrust_from_speeds(&speeds, &p);
            prop_assert!((nb[0] * kt - t).abs() <= 1e-12 * t.max(1e-12));
        }
    }
}
