//! Executing scenarios and writing their artifacts.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::curves;
use super::metrics::{angle_error_profile, attitude_rmse_deg, position_stats, MetricsReport};
use super::scenario::Scenario;
use crate::config::KvConfig;
use crate::controller::{CascadeController, FeedforwardController};
use crate::error::{Error, Result};
use crate::flatness::flat_reference;
use crate::sim::{run_scenario, FlightController, Plant, RigidState, TrajectoryLog};

/// Process exit codes of the command-line tool.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const CRASH: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
    pub const FIT: i32 = 5;
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Parameter(_) => exit_code::CONFIG,
        Error::Crashed { .. } => exit_code::CRASH,
        Error::Reference(_) => exit_code::INFEASIBLE,
        Error::Fit(_) => exit_code::FIT,
        _ => exit_code::OTHER,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Crashed,
    /// Finished, but the reference asked for rotor speeds outside limits.
    Infeasible,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Completed => exit_code::OK,
            Self::Crashed => exit_code::CRASH,
            Self::Infeasible => exit_code::INFEASIBLE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub log: TrajectoryLog,
    pub metrics: MetricsReport,
    pub status: RunStatus,
}

/// State matching the reference at `t = 0`, shifted by the scenario's
/// initial offset.
pub fn initial_state(s: &Scenario) -> Result<RigidState> {
    let model = s.controller_model()?;
    let traj = s.build_trajectory()?;
    let r = flat_reference(&traj.sample(0.0), &model)?;
    Ok(RigidState {
        p: r.flat.p + s.init_offset,
        v: r.flat.v,
        q: r.attitude,
        w: r.omega,
        rotors: r.rotors.0,
    })
}

pub fn controller_for(s: &Scenario) -> Result<Box<dyn FlightController>> {
    let traj = s.build_trajectory()?;
    let model = s.controller_model()?;
    Ok(if s.feedforward_only {
        Box::new(
            FeedforwardController::new(traj, model, s.controller.ff_lead)
                .with_actuator(s.sim.motor_tau, s.sim.ctrl_period)
                .with_rotational_model(s.sim.rotational_model),
        )
    } else {
        Box::new(CascadeController::new(s.controller.clone(), traj, model)?)
    })
}

/// Simulate the scenario and compute its metrics.
pub fn run(s: &Scenario) -> Result<RunOutcome> {
    let plant = Plant::new(s.vehicle.clone(), s.ground.clone(), s.sim.clone())?;
    let mut ctrl = controller_for(s)?;
    let init = initial_state(s)?;
    let log = run_scenario(&plant, ctrl.as_mut(), init, s.duration, s.seed)?;
    let metrics = metrics_for(s, &log)?;
    let status = if log.crashed.is_some() {
        RunStatus::Crashed
    } else if log.any_infeasible() {
        RunStatus::Infeasible
    } else {
        RunStatus::Completed
    };
    Ok(RunOutcome { log, metrics, status })
}

pub fn metrics_for(s: &Scenario, log: &TrajectoryLog) -> Result<MetricsReport> {
    let stats = position_stats(log, s.metrics_skip)?;
    let window = log.rows.iter().filter(|r| r.t >= s.metrics_skip);
    let (mut max_a, mut max_t, mut sat, mut n) = (0.0f64, 0.0f64, 0usize, 0usize);
    for r in window {
        max_a = max_a.max(r.accel_res.norm());
        max_t = max_t.max(r.torque_res.norm());
        sat += r.saturated as usize;
        n += 1;
    }
    let profile = match s.trajectory {
        super::scenario::TrajectorySpec::HoverDescent { .. } => angle_error_profile(log, s.profile_dh, s.metrics_skip)?,
        _ => Vec::new(),
    };
    Ok(MetricsReport {
        name: s.name.clone(),
        seed: s.seed,
        trajectory: s.trajectory.describe(),
        accel_comp: s.controller.gains.accel_comp.to_string(),
        torque_comp: if s.feedforward_only {
            "feedforward".into()
        } else {
            s.controller.gains.torque_comp.to_string()
        },
        samples: n,
        rmse_xoy_cm: stats.rmse_xoy,
        rmse_z_cm: stats.rmse_z,
        rmse_all_cm: stats.rmse_all,
        max_err_cm: stats.max,
        std_err_cm: stats.std,
        attitude_rmse_deg: attitude_rmse_deg(log, s.metrics_skip),
        max_accel_residual: max_a,
        max_torque_residual: max_t,
        saturated_fraction: if n > 0 { sat as f64 / n as f64 } else { 0.0 },
        infeasible: log.any_infeasible(),
        crashed_at: log.crashed,
        angle_profile: profile,
    })
}

/// Write `scenario.resolved`, `log.csv`, `metrics.json` and plot-ready
/// curves into `dir`.
pub fn write_run_dir(dir: &Path, s: &Scenario, out: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("scenario.resolved"), s.resolved().to_text())?;
    out.log.save(dir.join("log.csv"))?;
    std::fs::write(dir.join("metrics.json"), out.metrics.to_json()?)?;
    curves::write_series(
        &dir.join("curve_position_error.csv"),
        &["t", "ex", "ey", "ez", "norm"],
        out.log.rows.iter().map(|r| {
            let e = r.position_error();
            vec![r.t, e.x, e.y, e.z, e.norm()]
        }),
    )?;
    curves::write_series(
        &dir.join("curve_attitude_error.csv"),
        &["t", "h", "angle_deg"],
        out.log.rows.iter().map(|r| vec![r.t, r.h, r.attitude_error().to_degrees()]),
    )?;
    if !out.metrics.angle_profile.is_empty() {
        curves::write_series(
            &dir.join("curve_angle_profile.csv"),
            &["h0", "angle_rms_deg"],
            out.metrics.angle_profile.iter().map(|p| vec![p.0, p.1]),
        )?;
    }
    curves::write_model_curves(&dir.join("curve_model.csv"), &s.ground, &s.vehicle)?;
    Ok(())
}

/// One sweep member: its directory name and outcome.
pub struct SweepResult {
    pub label: String,
    pub scenario: Option<Scenario>,
    pub outcome: Result<RunOutcome>,
}

/// Runs the scenario once per value of `key`, on at most `jobs` threads.
/// Results come back in the order of `values` regardless of scheduling.
pub fn sweep(base: &KvConfig, base_dir: Option<&Path>, key: &str, values: &[String], jobs: usize) -> Result<Vec<SweepResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Input(e.to_string()))?;
    let base_name = base.str_or("name", "scenario").to_string();
    Ok(pool.install(|| {
        values
            .par_iter()
            .map(|v| {
                let label = sanitize(&format!("{base_name}_{key}={v}"));
                let mut cfg = base.clone();
                cfg.set(key, v.clone());
                cfg.set("name", label.clone());
                match Scenario::from_config(&cfg, base_dir) {
                    Ok(s) => {
                        let outcome = run(&s);
                        SweepResult {
                            label,
                            scenario: Some(s),
                            outcome,
                        }
                    }
                    Err(e) => SweepResult {
                        label,
                        scenario: None,
                        outcome: Err(e),
                    },
                }
            })
            .collect()
    }))
}

/// Runs scenarios in parallel; order is preserved.
pub fn run_many(scenarios: &[Scenario], jobs: usize) -> Result<Vec<Result<RunOutcome>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Input(e.to_string()))?;
    Ok(pool.install(|| scenarios.par_iter().map(run).collect()))
}

pub fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' })
        .collect()
}

pub fn run_dir(out: &Path, name: &str) -> PathBuf {
    out.join(sanitize(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            exit_code_for(&Error::config(1, "k", "m")),
            exit_code_for(&Error::Crashed { time: 0.0, height: 0.0 }),
            exit_code_for(&Error::Reference("x".into())),
            exit_code_for(&Error::Fit("x".into())),
            exit_code_for(&Error::Input("x".into())),
        ];
        assert_eq!(codes, [2, 3, 4, 5, 1]);
        assert_ne!(RunStatus::Crashed.exit_code(), 0);
    }

    #[test]
    fn sanitize_keeps_readable_names() {
        assert_eq!(sanitize("a b/c_sim.mismatch=0.05"), "a_b_c_sim.mismatch=0.05");
    }
}
