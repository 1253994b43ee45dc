use nalgebra::Vector3;

use crate::error::{Error, Result};

/// First-order IIR low-pass `y ← y + α(x − y)` with
/// `α = 1 − exp(−2π·f_c·dt)`, so a unit step reaches `1 − e⁻¹` after exactly
/// one time constant `1/(2π f_c)` when that is a whole number of samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowPass {
    alpha: f64,
    state: Option<f64>,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            alpha: alpha(cutoff_hz, dt)?,
            state: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Start from a known value instead of zero.
    pub fn reset(&mut self, value: f64) {
        self.state = Some(value);
    }

    pub fn update(&mut self, x: f64) -> f64 {
        let y = match self.state {
            Some(y) => y + self.alpha * (x - y),
            None => self.alpha * x,
        };
        self.state = Some(y);
        y
    }

    pub fn value(&self) -> f64 {
        self.state.unwrap_or(0.0)
    }
}

/// Three independent channels sharing one cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowPass3 {
    alpha: f64,
    state: Option<Vector3<f64>>,
}

impl LowPass3 {
    pub fn new(cutoff_hz: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            alpha: alpha(cutoff_hz, dt)?,
            state: None,
        })
    }

    pub fn reset(&mut self, value: Vector3<f64>) {
        self.state = Some(value);
    }

    pub fn update(&mut self, x: &Vector3<f64>) -> Vector3<f64> {
        let y = match self.state {
            Some(y) => y + self.alpha * (x - y),
            None => self.alpha * x,
        };
        self.state = Some(y);
        y
    }

    pub fn value(&self) -> Vector3<f64> {
        self.state.unwrap_or_else(Vector3::zeros)
    }

    pub fn is_initialised(&self) -> bool {
        self.state.is_some()
    }
}

fn alpha(cutoff_hz: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::config(0, "dt", "sample period must be positive"));
    }
    let nyquist = 0.5 / dt;
    if !(cutoff_hz > 0.0) || cutoff_hz >= nyquist {
        return Err(Error::config(
            0,
            "cutoff_hz",
            format!("cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz"),
        ));
    }
    Ok(1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp())
}
