//! Scenario files: one flat key-value config describing a complete run.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::config::KvConfig;
use crate::controller::{ControllerConfig, CONTROLLER_KEYS};
use crate::error::{Error, Result};
use crate::flatness::{FlatModel, HoverDescent, Lemniscate, Trajectory};
use crate::groundfx::{GroundEffectParams, GROUND_EFFECT_KEYS};
use crate::sim::{RotationalModel, SimConfig, SIM_KEYS};
use crate::vehicle::{VehicleParams, VEHICLE_KEYS};

pub const SCENARIO_KEYS: &[&str] = &[
    "name",
    "seed",
    "duration",
    "vehicle_file",
    "ground_effect_file",
    "traj.type",
    "traj.height",
    "traj.center",
    "traj.half_width",
    "traj.speed",
    "traj.yaw",
    "traj.h_start",
    "traj.h_end",
    "traj.descent_time",
    "traj.hold",
    "init.offset",
    "ref.thrust_rate_height_term",
    "metrics.skip",
    "metrics.dh",
];

/// Trajectory selection as written in the scenario.
#[derive(Clone, Debug, PartialEq)]
pub enum TrajectorySpec {
    Hover {
        center: (f64, f64),
        height: f64,
        yaw: f64,
    },
    Lemniscate {
        center: (f64, f64),
        height: f64,
        half_width: f64,
        speed: f64,
    },
    HoverDescent {
        center: (f64, f64),
        h_start: f64,
        h_end: f64,
        descent_time: f64,
        /// Time spent at `h_start` before descending.
        hold: f64,
    },
}

impl TrajectorySpec {
    pub fn describe(&self) -> String {
        match self {
            Self::Hover { height, .. } => format!("hover h={height}"),
            Self::Lemniscate {
                height,
                half_width,
                speed,
                ..
            } => format!("lemniscate h={height} a={half_width} v={speed}"),
            Self::HoverDescent {
                h_start,
                h_end,
                descent_time,
                ..
            } => format!("hover_descent {h_start}->{h_end} in {descent_time}s"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub vehicle: VehicleParams,
    pub ground: GroundEffectParams,
    pub sim: SimConfig,
    pub controller: ControllerConfig,
    /// Play the reference rotor speeds open loop.
    pub feedforward_only: bool,
    pub trajectory: TrajectorySpec,
    pub init_offset: Vector3<f64>,
    pub thrust_rate_height_term: bool,
    /// Seconds excluded from metrics at the start of the run.
    pub metrics_skip: f64,
    /// Half-width of the altitude bins of the angle-error profile (m).
    pub profile_dh: f64,
}

fn xy(v: Vector3<f64>) -> (f64, f64) {
    (v.x, v.y)
}

impl Scenario {
    /// Reads a scenario file, inlining `vehicle_file` and
    /// `ground_effect_file` (paths relative to the scenario) underneath the
    /// scenario's own keys.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = KvConfig::load(path)?;
        for (k, v) in overrides {
            cfg.set(k, v.clone());
        }
        Self::from_config(&cfg, path.parent())
    }

    pub fn merged_config(cfg: &KvConfig, base_dir: Option<&Path>) -> Result<KvConfig> {
        let resolve = |p: &str| -> PathBuf {
            let pb = PathBuf::from(p);
            match base_dir {
                Some(d) if pb.is_relative() => d.join(pb),
                _ => pb,
            }
        };
        let mut merged = KvConfig::default();
        for key in ["vehicle_file", "ground_effect_file"] {
            if let Some(e) = cfg.get(key) {
                let file = resolve(&e.value);
                let sub = KvConfig::load(&file).map_err(|err| e.error(format!("{}: {err}", file.display())))?;
                merged.overlay(&sub);
            }
        }
        let mut own = cfg.clone();
        own.remove("vehicle_file");
        own.remove("ground_effect_file");
        merged.overlay(&own);
        Ok(merged)
    }

    pub fn from_config(cfg: &KvConfig, base_dir: Option<&Path>) -> Result<Self> {
        let merged = Self::merged_config(cfg, base_dir)?;
        let known: Vec<&str> = SCENARIO_KEYS
            .iter()
            .chain(VEHICLE_KEYS)
            .chain(GROUND_EFFECT_KEYS)
            .chain(SIM_KEYS)
            .chain(CONTROLLER_KEYS)
            .copied()
            .collect();
        merged.check_known(&known)?;

        let seed = merged
            .get("seed")
            .ok_or_else(|| Error::config(0, "seed", "every scenario needs a seed"))?
            .u64()?;
        let vehicle = VehicleParams::from_config(&merged)?;
        let ground = GroundEffectParams::from_config(&merged, vehicle.wheelbase)?;
        let sim = SimConfig::from_config(&merged)?;
        let mut controller = ControllerConfig::from_config(&merged, sim.ctrl_period, sim.pos_ticks()?)?;
        let feedforward_only = merged.bool_or("ctrl.feedforward_only", false)?;
        if !merged.contains("ctrl.ff_lead") {
            // Lag inversion already places each rotor target at the end of
            // its interval; a plain held command is best centred on it.
            controller.ff_lead = if feedforward_only && sim.motor_tau > 0.0 {
                0.0
            } else {
                sim.ctrl_period / 2.0
            };
        }

        let center = xy(merged.vec3_or("traj.center", Vector3::zeros())?);
        let kind = merged.str_or("traj.type", "hover");
        let trajectory = match kind {
            "hover" => TrajectorySpec::Hover {
                center,
                height: merged.f64_or("traj.height", 1.0)?,
                yaw: merged.f64_or("traj.yaw", 0.0)?.to_radians(),
            },
            "lemniscate" => TrajectorySpec::Lemniscate {
                center,
                height: merged.f64_or("traj.height", 0.12)?,
                half_width: merged.f64_or("traj.half_width", 1.0)?,
                speed: merged.f64_or("traj.speed", 1.0)?,
            },
            "hover_descent" => TrajectorySpec::HoverDescent {
                center,
                h_start: merged.f64_or("traj.h_start", 0.8)?,
                h_end: merged.f64_or("traj.h_end", 0.06)?,
                descent_time: merged.f64_or("traj.descent_time", 30.0)?,
                hold: merged.f64_or("traj.hold", 2.0)?,
            },
            other => {
                let e = merged.get("traj.type").expect("non-default value came from a key");
                return Err(e.error(format!("unknown trajectory `{other}` (hover | lemniscate | hover_descent)")));
            }
        };
        let s = Self {
            name: merged.str_or("name", "scenario").to_string(),
            seed,
            duration: merged.f64_or("duration", 10.0)?,
            vehicle,
            ground,
            sim,
            controller,
            feedforward_only,
            trajectory,
            init_offset: merged.vec3_or("init.offset", Vector3::zeros())?,
            thrust_rate_height_term: merged.bool_or("ref.thrust_rate_height_term", true)?,
            metrics_skip: merged.f64_or("metrics.skip", 0.0)?,
            profile_dh: merged.f64_or("metrics.dh", 0.02)?,
        };
        s.build_trajectory().map_err(|e| match merged.get("traj.type") {
            Some(entry) => entry.error(e.to_string()),
            None => e,
        })?;
        if !(s.duration > 0.0) {
            return Err(Error::config(merged.get("duration").map_or(0, |e| e.line), "duration", "must be positive"));
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_config(&KvConfig::parse(text)?, None)
    }

    /// Body-origin altitude for a rotor-plane height.
    fn z_for(&self, h: f64) -> f64 {
        h - self.vehicle.rotor_plane_offset
    }

    pub fn build_trajectory(&self) -> Result<Trajectory> {
        Ok(match self.trajectory {
            TrajectorySpec::Hover { center, height, yaw } => Trajectory::Hover {
                p: Vector3::new(center.0, center.1, self.z_for(height)),
                yaw,
            },
            TrajectorySpec::Lemniscate {
                center,
                height,
                half_width,
                speed,
            } => Trajectory::Lemniscate(Lemniscate::new(
                Vector3::new(center.0, center.1, self.z_for(height)),
                half_width,
                speed,
            )?),
            TrajectorySpec::HoverDescent {
                center,
                h_start,
                h_end,
                descent_time,
                hold,
            } => {
                if hold < 0.0 {
                    return Err(Error::Parameter("hold must be >= 0".into()));
                }
                Trajectory::HoverDescent(HoverDescent::new(
                    center,
                    self.z_for(h_start),
                    self.z_for(h_end),
                    descent_time,
                    self.z_for(self.sim.min_clearance),
                )?
                .with_start(hold))
            }
        })
    }

    /// Ground-effect model handed to the controller: amplitudes scaled by
    /// `1 + mismatch`.
    pub fn controller_ground(&self) -> GroundEffectParams {
        self.ground.scaled(1.0 + self.sim.mismatch)
    }

    pub fn controller_model(&self) -> Result<FlatModel> {
        let mut m = FlatModel::new(self.vehicle.clone(), self.controller_ground(), self.sim.gravity)?;
        m.thrust_rate_height_term = self.thrust_rate_height_term;
        Ok(m)
    }

    /// Every setting written out explicitly, so the file alone reproduces
    /// the run.
    pub fn resolved(&self) -> KvConfig {
        let mut c = KvConfig::default();
        let v3 = |v: &Vector3<f64>| format!("{}, {}, {}", v.x, v.y, v.z);
        let b = |x: bool| if x { "on" } else { "off" }.to_string();
        c.set("name", self.name.clone());
        c.set("seed", self.seed.to_string());
        c.set("duration", self.duration.to_string());

        let veh = &self.vehicle;
        let j = &veh.inertia;
        c.set("mass", veh.mass.to_string());
        c.set(
            "inertia",
            format!("{}, {}, {}, {}, {}, {}", j[(0, 0)], j[(1, 1)], j[(2, 2)], j[(0, 1)], j[(0, 2)], j[(1, 2)]),
        );
        c.set("wheelbase", veh.wheelbase.to_string());
        c.set("k_t", veh.k_t.to_string());
        c.set("k_tx", veh.k_tx.to_string());
        c.set("k_ty", veh.k_ty.to_string());
        c.set("k_i", veh.k_i.to_string());
        c.set("n_max", veh.n_max.to_string());
        c.set("rotor_plane_offset", veh.rotor_plane_offset.to_string());

        let g = &self.ground;
        for (k, v) in [("g1", g.g1), ("g2", g.g2), ("g3", g.g3), ("g4", g.g4), ("g5", g.g5)] {
            c.set(k, v.to_string());
        }
        let mut text = c.to_text();
        for s in g.drag.samples() {
            text.push_str(&format!("drag_sample = {}, {}, {}\n", s.h, s.dx, s.dy));
        }
        let mut c = KvConfig::parse(&text).expect("generated config parses");
        c.set("saturate_tilt", b(g.saturate_tilt));
        c.set("tilt_limit_deg", g.tilt_limit.to_degrees().to_string());

        let s = &self.sim;
        c.set("sim.dt", s.dt.to_string());
        c.set("sim.ctrl_period", s.ctrl_period.to_string());
        c.set("sim.pos_period", s.pos_period.to_string());
        c.set("sim.gravity", s.gravity.to_string());
        c.set("sim.ge_force", b(s.toggles.ge_force));
        c.set("sim.ge_torque", b(s.toggles.ge_torque));
        c.set("sim.ge_drag", b(s.toggles.ge_drag));
        c.set(
            "sim.torque_model",
            match s.rotational_model {
                RotationalModel::Explicit => "explicit",
                RotationalModel::Equivalent => "equivalent",
            },
        );
        c.set("sim.motor_tau", s.motor_tau.to_string());
        c.set("sim.accel_noise", s.accel_noise.to_string());
        c.set("sim.gyro_noise", s.gyro_noise.to_string());
        c.set("sim.mismatch", s.mismatch.to_string());
        c.set("sim.ext_force", v3(&s.external.force));
        c.set("sim.ext_torque", v3(&s.external.torque));
        c.set("sim.ext_start", s.external.start.to_string());
        c.set("sim.min_clearance", s.min_clearance.to_string());
        c.set("sim.log_every", s.log_every.to_string());

        let k = &self.controller;
        c.set("ctrl.kp", v3(&k.gains.kp));
        c.set("ctrl.kv", v3(&k.gains.kv));
        c.set("ctrl.kxi", v3(&k.gains.kxi));
        c.set("ctrl.kw", v3(&k.gains.kw));
        c.set("ctrl.accel_comp", k.gains.accel_comp.to_string());
        c.set("ctrl.torque_comp", k.gains.torque_comp.to_string());
        c.set("ctrl.filter_cutoff", k.filter_cutoff.to_string());
        c.set("ctrl.ff_lead", k.ff_lead.to_string());
        c.set("ctrl.feedforward_only", b(self.feedforward_only));

        match &self.trajectory {
            TrajectorySpec::Hover { center, height, yaw } => {
                c.set("traj.type", "hover");
                c.set("traj.center", format!("{}, {}, 0", center.0, center.1));
                c.set("traj.height", height.to_string());
                c.set("traj.yaw", yaw.to_degrees().to_string());
            }
            TrajectorySpec::Lemniscate {
                center,
                height,
                half_width,
                speed,
            } => {
                c.set("traj.type", "lemniscate");
                c.set("traj.center", format!("{}, {}, 0", center.0, center.1));
                c.set("traj.height", height.to_string());
                c.set("traj.half_width", half_width.to_string());
                c.set("traj.speed", speed.to_string());
            }
            TrajectorySpec::HoverDescent {
                center,
                h_start,
                h_end,
                descent_time,
                hold,
            } => {
                c.set("traj.type", "hover_descent");
                c.set("traj.center", format!("{}, {}, 0", center.0, center.1));
                c.set("traj.h_start", h_start.to_string());
                c.set("traj.h_end", h_end.to_string());
                c.set("traj.descent_time", descent_time.to_string());
                c.set("traj.hold", hold.to_string());
            }
        }
        c.set("init.offset", v3(&self.init_offset));
        c.set("ref.thrust_rate_height_term", b(self.thrust_rate_height_term));
        c.set("metrics.skip", self.metrics_skip.to_string());
        c.set("metrics.dh", self.profile_dh.to_string());
        c
    }
}
