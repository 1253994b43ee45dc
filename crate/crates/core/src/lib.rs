//! Near-ground multicopter toolkit.
//!
//! Ground-effect disturbance models (additional thrust, leveling torque,
//! altitude-dependent rotor drag), a rigid-body simulator, a differential
//! flatness reference pipeline, a cascaded controller mixing model-based
//! compensation with incremental dynamic inversion, identification tools and
//! an experiment harness.

pub mod config;
pub mod controller;
pub mod error;
pub mod estimation;
pub mod flatness;
pub mod groundfx;
pub mod harness;
pub mod sim;
pub mod vehicle;

pub use error::{Error, Result};

/// Standard gravity used by every default configuration (m/s²).
pub const GRAVITY: f64 = 9.81;
