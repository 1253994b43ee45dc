//! Ground-effect disturbance models.
//!
//! * additional thrust `f_G = F_G(h)·T·z_B` with `F_G(h) = g2 / (h² + g1)`
//! * leveling torque `τ_G = M_G(h)·T·Rᵀ(z_B × z_W)` with
//!   `M_G(h) = g5·h / (h² + g3·h + g4)²`
//! * rotor drag `f_D = −R·D(h)·Rᵀ·v` with `D(h)` interpolated from a table
//! * the equivalent inertia `J'(h)` that absorbs the leveling torque.
//!
//! `h` is always the height of the rotor-plane centre above the ground.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::vehicle::VehicleParams;
use crate::GRAVITY;

/// One row of the drag table. Coefficients are force per unit body
/// velocity (N·s/m); divide by mass for the 1/s form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DragSample {
    pub h: f64,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DragTable {
    samples: Vec<DragSample>,
}

impl DragTable {
    pub fn new(samples: Vec<DragSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Parameter(format!(
                "drag table needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for w in samples.windows(2) {
            if !(w[1].h > w[0].h) {
                return Err(Error::Parameter("drag table heights must be strictly increasing".into()));
            }
        }
        if samples.iter().any(|s| !(s.dx >= 0.0 && s.dy >= 0.0 && s.h.is_finite())) {
            return Err(Error::Parameter("drag coefficients must be non-negative".into()));
        }
        Ok(Self { samples })
    }

    /// A table that is the same at every altitude.
    pub fn constant(dx: f64, dy: f64) -> Self {
        Self {
            samples: vec![DragSample { h: 0.0, dx, dy }, DragSample { h: 1.0, dx, dy }],
        }
    }

    pub fn samples(&self) -> &[DragSample] {
        &self.samples
    }

    /// Piecewise-linear lookup, clamped to the end samples.
    pub fn lookup(&self, h: f64) -> (f64, f64) {
        let s = &self.samples;
        let first = s[0];
        let last = s[s.len() - 1];
        if h <= first.h {
            return (first.dx, first.dy);
        }
        if h >= last.h {
            return (last.dx, last.dy);
        }
        let i = s.partition_point(|x| x.h <= h);
        let (a, b) = (s[i - 1], s[i]);
        let t = (h - a.h) / (b.h - a.h);
        (a.dx + t * (b.dx - a.dx), a.dy + t * (b.dy - a.dy))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| DragSample {
                    h: s.h,
                    dx: s.dx * factor,
                    dy: s.dy * factor,
                })
                .collect(),
        }
    }
}

impl Default for DragTable {
    /// High-altitude coefficients fall to the measured near-ground ratios
    /// (0.5963 in x, 0.6179 in y at 0.1 m relative to 2.0 m).
    fn default() -> Self {
        let (dx_inf, dy_inf) = (0.40, 0.45);
        let rows = [
            (0.1, 0.5963, 0.6179),
            (0.2, 0.75, 0.76),
            (0.4, 0.88, 0.885),
            (0.8, 0.96, 0.962),
            (2.0, 1.0, 1.0),
        ];
        Self {
            samples: rows
                .iter()
                .map(|&(h, rx, ry)| DragSample {
                    h,
                    dx: rx * dx_inf,
                    dy: ry * dy_inf,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundEffectParams {
    /// m²
    pub g1: f64,
    /// m²
    pub g2: f64,
    /// m
    pub g3: f64,
    /// m²
    pub g4: f64,
    /// m³
    pub g5: f64,
    pub drag: DragTable,
    /// Hold the leveling torque constant beyond `tilt_limit` (rad).
    pub saturate_tilt: bool,
    pub tilt_limit: f64,
}

pub const GROUND_EFFECT_KEYS: &[&str] = &[
    "g1",
    "g2",
    "g3",
    "g4",
    "g5",
    "drag_sample",
    "saturate_tilt",
    "tilt_limit_deg",
];

impl Default for GroundEffectParams {
    fn default() -> Self {
        Self::tied(0.09, 0.0405, VehicleParams::default().wheelbase)
    }
}

impl GroundEffectParams {
    /// Torque parameters tied to the thrust model (`g3 = 0`, `g4 = g1`,
    /// `g5 = b²·g2/4`), which makes `M_G = −(b²/8)·F_G'` exactly.
    pub fn tied(g1: f64, g2: f64, wheelbase: f64) -> Self {
        Self {
            g1,
            g2,
            g3: 0.0,
            g4: g1,
            g5: wheelbase * wheelbase * g2 / 4.0,
            drag: DragTable::default(),
            saturate_tilt: true,
            tilt_limit: 10f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g1 > 0.0) {
            return Err(Error::Parameter(format!("g1 must be > 0, got {}", self.g1)));
        }
        if !(self.g2 >= 0.0) {
            return Err(Error::Parameter(format!("g2 must be >= 0, got {}", self.g2)));
        }
        if !(self.g4 > 0.0) {
            return Err(Error::Parameter(format!("g4 must be > 0, got {}", self.g4)));
        }
        if !(self.g5 >= 0.0) {
            return Err(Error::Parameter(format!("g5 must be >= 0, got {}", self.g5)));
        }
        // h² + g3·h + g4 > 0 on h >= 0; only a negative g3 can break it.
        if self.g3 < 0.0 && self.g4 - self.g3 * self.g3 / 4.0 <= 0.0 {
            return Err(Error::Parameter("h² + g3·h + g4 must stay positive for h >= 0".into()));
        }
        if !(self.tilt_limit > 0.0) {
            return Err(Error::Parameter("tilt limit must be positive".into()));
        }
        Ok(())
    }

    /// Missing `g3..g5` fall back to the tied values for the given wheelbase.
    pub fn from_config(cfg: &KvConfig, wheelbase: f64) -> Result<Self> {
        let d = Self::default();
        let g1 = cfg.f64_or("g1", d.g1)?;
        let g2 = cfg.f64_or("g2", d.g2)?;
        let tied = Self::tied(g1, g2, wheelbase);
        let drag = if cfg.contains("drag_sample") {
            let mut samples = Vec::new();
            for e in cfg.get_all("drag_sample") {
                let v = e.list()?;
                if v.len() != 3 {
                    return Err(e.error("expected `h, dx, dy`"));
                }
                samples.push(DragSample {
                    h: v[0],
                    dx: v[1],
                    dy: v[2],
                });
            }
            DragTable::new(samples).map_err(|err| {
                let e = cfg.get("drag_sample").expect("present");
                e.error(err.to_string())
            })?
        } else {
            DragTable::default()
        };
        let p = Self {
            g1,
            g2,
            g3: cfg.f64_or("g3", tied.g3)?,
            g4: cfg.f64_or("g4", tied.g4)?,
            g5: cfg.f64_or("g5", tied.g5)?,
            drag,
            saturate_tilt: cfg.bool_or("saturate_tilt", d.saturate_tilt)?,
            tilt_limit: cfg.f64_or("tilt_limit_deg", d.tilt_limit.to_degrees())?.to_radians(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Copy with every amplitude (g2, g5, drag) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            g2: self.g2 * factor,
            g5: self.g5 * factor,
            drag: self.drag.scaled(factor),
            ..self.clone()
        }
    }

    pub fn fg(&self, h: f64) -> Result<f64> {
        check_height(h)?;
        Ok(self.g2 / (h * h + self.g1))
    }

    /// dF_G/dh
    pub fn fg_prime(&self, h: f64) -> Result<f64> {
        check_height(h)?;
        let d = h * h + self.g1;
        Ok(-2.0 * self.g2 * h / (d * d))
    }

    /// Leveling torque per unit thrust per unit sin(tilt) (m).
    pub fn mg(&self, h: f64) -> Result<f64> {
        check_height(h)?;
        let d = h * h + self.g3 * h + self.g4;
        Ok(self.g5 * h / (d * d))
    }

    /// Height maximising `M_G` (closed form of the quartic stationarity
    /// condition `3h² + g3·h − g4 = 0`).
    pub fn mg_argmax(&self) -> f64 {
        (-self.g3 + (self.g3 * self.g3 + 12.0 * self.g4).sqrt()) / 6.0
    }

    /// Diagonal drag matrix `diag(d_x, d_y, 0)`.
    pub fn drag_coeff(&self, h: f64) -> Result<Matrix3<f64>> {
        check_height(h)?;
        let (dx, dy) = self.drag.lookup(h);
        Ok(Matrix3::from_diagonal(&Vector3::new(dx, dy, 0.0)))
    }

    /// World-frame additional force.
    pub fn ge_force(&self, rot: &Matrix3<f64>, thrust: f64, h: f64) -> Result<Vector3<f64>> {
        check_rotation(rot)?;
        Ok(self.fg(h)? * thrust * rot.column(2))
    }

    /// World-frame rotor drag for world velocity `v`.
    pub fn drag_force(&self, rot: &Matrix3<f64>, v: &Vector3<f64>, h: f64) -> Result<Vector3<f64>> {
        check_rotation(rot)?;
        Ok(-(rot * self.drag_coeff(h)? * rot.transpose() * v))
    }

    /// Body-frame leveling torque.
    pub fn leveling_torque(&self, rot: &Matrix3<f64>, thrust: f64, h: f64) -> Result<Vector3<f64>> {
        check_rotation(rot)?;
        if thrust < 0.0 {
            return Err(Error::Input(format!("thrust must be >= 0, got {thrust}")));
        }
        let z_b: Vector3<f64> = rot.column(2).into();
        let axis = z_b.cross(&Vector3::z());
        let sin_delta = axis.norm();
        if sin_delta < 1e-15 {
            return Ok(Vector3::zeros());
        }
        let delta = z_b.z.clamp(-1.0, 1.0).acos();
        let effective = if self.saturate_tilt && delta > self.tilt_limit {
            self.tilt_limit.sin()
        } else {
            sin_delta
        };
        Ok(self.mg(h)? * thrust * effective * (rot.transpose() * (axis / sin_delta)))
    }

    /// `J'(h) = J + diag(a, a, 0)`, `a = (M_G·T)² / (m·g²)`. Without a thrust
    /// hint the hover approximation `M_G·T ≈ m·g·M_G / (1 + F_G)` is used.
    pub fn equivalent_inertia(&self, h: f64, thrust_hint: Option<f64>, vehicle: &VehicleParams) -> Result<Matrix3<f64>> {
        let m = vehicle.mass;
        let mg_t = match thrust_hint {
            Some(t) if t > 0.0 => self.mg(h)? * t,
            _ => m * GRAVITY * self.mg(h)? / (1.0 + self.fg(h)?),
        };
        let added = mg_t * mg_t / (m * GRAVITY * GRAVITY);
        Ok(vehicle.inertia + Matrix3::from_diagonal(&Vector3::new(added, added, 0.0)))
    }
}

/// Magnitude of the leveling torque from integrating the additional force
/// density over the rotor circle with the exact (non-linearised) `F_G`.
/// Composite Simpson with 4096 intervals.
pub fn quadrature_oracle(h: f64, delta: f64, thrust: f64, wheelbase: f64, params: &GroundEffectParams) -> Result<f64> {
    quadrature_oracle_with(h, delta, thrust, wheelbase, params, 4096)
}

pub fn quadrature_oracle_with(
    h: f64,
    delta: f64,
    thrust: f64,
    wheelbase: f64,
    params: &GroundEffectParams,
    intervals: usize,
) -> Result<f64> {
    let r = wheelbase / 2.0;
    if h - r * delta.sin().abs() <= 0.0 {
        return Err(Error::Domain(format!(
            "lowest rotor point at or below ground (h = {h}, tilt = {delta})"
        )));
    }
    let n = intervals + intervals % 2;
    let step = 2.0 * PI / n as f64;
    let integrand = |theta: f64| {
        let height = h - r * delta.sin() * theta.cos();
        let density = params.g2 / (height * height + params.g1) * thrust / (2.0 * PI);
        density * r * theta.cos()
    };
    let mut sum = integrand(0.0) + integrand(2.0 * PI);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(i as f64 * step);
    }
    Ok(sum * step / 3.0)
}

fn check_height(h: f64) -> Result<()> {
    if h >= 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("height must be >= 0, got {h}")))
    }
}

fn check_rotation(rot: &Matrix3<f64>) -> Result<()> {
    let err = (rot.transpose() * rot - Matrix3::identity()).norm();
    if err > 1e-6 {
        return Err(Error::Input(format!("rotation is not orthonormal (|RᵀR − I| = {err:.3e})")));
    }
    Ok(())
}
