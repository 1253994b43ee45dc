//! Tracking metrics, the altitude-binned attitude-error profile and
//! controller comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::TrajectoryLog;

/// Position errors in centimetres, attitude errors in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub seed: u64,
    /// Trajectory summary; comparisons flag rows whose specs differ.
    pub trajectory: String,
    pub accel_comp: String,
    pub torque_comp: String,
    pub samples: usize,
    pub rmse_xoy_cm: f64,
    pub rmse_z_cm: f64,
    pub rmse_all_cm: f64,
    pub max_err_cm: f64,
    pub std_err_cm: f64,
    pub attitude_rmse_deg: f64,
    /// Largest observer residual after subtracting the modelled disturbance.
    pub max_accel_residual: f64,
    pub max_torque_residual: f64,
    pub saturated_fraction: f64,
    pub infeasible: bool,
    pub crashed_at: Option<f64>,
    /// `(h0, E(h0))` in metres and degrees.
    pub angle_profile: Vec<(f64, f64)>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Position statistics over `rows` (cm).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PositionStats {
    pub rmse_xoy: f64,
    pub rmse_z: f64,
    pub rmse_all: f64,
    pub max: f64,
    pub std: f64,
}

pub fn position_stats(log: &TrajectoryLog, skip: f64) -> Result<PositionStats> {
    let errs: Vec<_> = log
        .rows
        .iter()
        .filter(|r| r.t >= skip)
        .map(|r| r.position_error() * 100.0)
        .collect();
    if errs.is_empty() {
        return Err(Error::Input("log has no samples in the metric window".into()));
    }
    let n = errs.len() as f64;
    let xy = errs.iter().map(|e| e.x * e.x + e.y * e.y).sum::<f64>() / n;
    let z = errs.iter().map(|e| e.z * e.z).sum::<f64>() / n;
    let norms: Vec<f64> = errs.iter().map(|e| e.norm()).collect();
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(PositionStats {
        rmse_xoy: xy.sqrt(),
        rmse_z: z.sqrt(),
        rmse_all: (xy + z).sqrt(),
        max: norms.iter().copied().fold(0.0, f64::max),
        std: var.sqrt(),
    })
}

/// RMS geodesic attitude error (degrees) over rows after `skip`.
pub fn attitude_rmse_deg(log: &TrajectoryLog, skip: f64) -> f64 {
    let e: Vec<f64> = log.rows.iter().filter(|r| r.t >= skip).map(|r| r.attitude_error()).collect();
    if e.is_empty() {
        return 0.0;
    }
    (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt().to_degrees()
}

/// Minimum samples for a profile bin to be reported.
pub const MIN_BIN_SAMPLES: usize = 10;

/// RMS attitude error (degrees) in windows `[h0 − Δh, h0 + Δh]` on a grid of
/// step `Δh`; sparse bins are omitted.
pub fn angle_error_profile(log: &TrajectoryLog, dh: f64, skip: f64) -> Result<Vec<(f64, f64)>> {
    if !(dh > 0.0) {
        return Err(Error::Parameter("profile bin width must be positive".into()));
    }
    let pts: Vec<(f64, f64)> = log
        .rows
        .iter()
        .filter(|r| r.t >= skip)
        .map(|r| (r.h, r.attitude_error()))
        .collect();
    if pts.is_empty() {
        return Err(Error::Input("empty log".into()));
    }
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let first = (lo / dh).floor() as i64;
    let last = (hi / dh).ceil() as i64;
    let mut out = Vec::new();
    for k in first..=last {
        let h0 = k as f64 * dh;
        let (sum, count) = pts
            .iter()
            .filter(|p| (p.0 - h0).abs() <= dh)
            .fold((0.0, 0usize), |(s, c), p| (s + p.1 * p.1, c + 1));
        if count >= MIN_BIN_SAMPLES {
            out.push((h0, (sum / count as f64).sqrt().to_degrees()));
        }
    }
    Ok(out)
}

/// Altitude with the largest profile value.
pub fn profile_peak(profile: &[(f64, f64)]) -> Option<(f64, f64)> {
    profile.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Max over mean of the profile values.
pub fn profile_flatness(profile: &[(f64, f64)]) -> Option<f64> {
    if profile.is_empty() {
        return None;
    }
    let mean = profile.iter().map(|p| p.1).sum::<f64>() / profile.len() as f64;
    let max = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    (mean > 0.0).then(|| max / mean)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub rmse_xoy_cm: f64,
    pub rmse_z_cm: f64,
    pub rmse_all_cm: f64,
    pub max_err_cm: f64,
    pub std_err_cm: f64,
    /// `100·(1 − RMSE_all / RMSE_all,baseline)`.
    pub reduction_pct: f64,
    /// Trajectory differs from the baseline's.
    pub mismatched: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// Table of the five tracking metrics per report, with the RMSE reduction
/// relative to `baseline` (a report name; the first report by default).
pub fn compare(reports: &[MetricsReport], baseline: Option<&str>) -> Result<Comparison> {
    let first = reports.first().ok_or_else(|| Error::Input("nothing to compare".into()))?;
    let base = match baseline {
        Some(name) => reports
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::Input(format!("baseline `{name}` not among the reports")))?,
        None => first,
    };
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            name: r.name.clone(),
            rmse_xoy_cm: r.rmse_xoy_cm,
            rmse_z_cm: r.rmse_z_cm,
            rmse_all_cm: r.rmse_all_cm,
            max_err_cm: r.max_err_cm,
            std_err_cm: r.std_err_cm,
            reduction_pct: if base.rmse_all_cm > 0.0 {
                100.0 * (1.0 - r.rmse_all_cm / base.rmse_all_cm)
            } else {
                0.0
            },
            mismatched: r.trajectory != base.trajectory,
        })
        .collect();
    Ok(Comparison {
        baseline: base.name.clone(),
        rows,
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<28} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10}",
            "scenario", "XOY", "Z", "All", "max", "std", "vs base"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<28} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.1}%{}",
                r.name,
                r.rmse_xoy_cm,
                r.rmse_z_cm,
                r.rmse_all_cm,
                r.max_err_cm,
                r.std_err_cm,
                r.reduction_pct,
                if r.mismatched { "  (different trajectory)" } else { "" }
            );
        }
        let _ = writeln!(s, "errors in cm; baseline: {}", self.baseline);
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Input(e.to_string()))
    }
}
