//! Per-tick trajectory log and its CSV form.
//!
//! Column order is fixed (see [`LOG_COLUMNS`]); time comes first. Floats are
//! written with Rust's shortest round-trip formatting so a written log parses
//! back into identical values.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};

use super::{DisturbanceWrench, RigidState, TickOutput};
use crate::error::{Error, Result};

pub const LOG_COLUMNS: &[&str] = &[
    "t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "n1", "n2", "n3", "n4",
    "px_des", "py_des", "pz_des", "vx_des", "vy_des", "vz_des", "qw_des", "qx_des", "qy_des", "qz_des",
    "thrust_cmd", "taux_cmd", "tauy_cmd", "tauz_cmd", "n1_cmd", "n2_cmd", "n3_cmd", "n4_cmd",
    "aext_x", "aext_y", "aext_z", "text_x", "text_y", "text_z",
    "ares_x", "ares_y", "ares_z", "tres_x", "tres_y", "tres_z",
    "fge_x", "fge_y", "fge_z", "fdrag_x", "fdrag_y", "fdrag_z", "tauge_x", "tauge_y", "tauge_z",
    "h", "saturated", "infeasible",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub w: Vector3<f64>,
    pub rotors: [f64; 4],
    pub p_des: Vector3<f64>,
    pub v_des: Vector3<f64>,
    pub q_des: UnitQuaternion<f64>,
    pub thrust_cmd: f64,
    pub torque_cmd: Vector3<f64>,
    pub rotors_cmd: [f64; 4],
    /// Observer output: external acceleration (world) and torque (body).
    pub accel_ext: Vector3<f64>,
    pub torque_ext: Vector3<f64>,
    /// Observer output minus the modelled disturbances.
    pub accel_res: Vector3<f64>,
    pub torque_res: Vector3<f64>,
    /// True disturbances acting on the plant.
    pub f_ge: Vector3<f64>,
    pub f_drag: Vector3<f64>,
    pub tau_ge: Vector3<f64>,
    /// Rotor-plane height.
    pub h: f64,
    pub saturated: bool,
    pub infeasible: bool,
}

impl LogRow {
    pub fn new(t: f64, s: &RigidState, out: &TickOutput, dist: &DisturbanceWrench, h: f64) -> Self {
        Self {
            t,
            p: s.p,
            v: s.v,
            q: s.q,
            w: s.w,
            rotors: s.rotors,
            p_des: out.p_des,
            v_des: out.v_des,
            q_des: out.q_des,
            thrust_cmd: out.thrust,
            torque_cmd: out.torque,
            rotors_cmd: out.rotors.0,
            accel_ext: out.accel_ext,
            torque_ext: out.torque_ext,
            accel_res: out.accel_residual,
            torque_res: out.torque_residual,
            f_ge: dist.f_ge,
            f_drag: dist.f_drag,
            tau_ge: dist.tau_ge,
            h,
            saturated: out.saturated,
            infeasible: out.infeasible,
        }
    }

    /// All-zero row with identity attitudes.
    pub fn from_zeros() -> Self {
        let mut r = Self::from_values(&vec![0.0; LOG_COLUMNS.len()]);
        r.q = UnitQuaternion::identity();
        r.q_des = UnitQuaternion::identity();
        r
    }

    /// Geodesic angle between the actual and desired attitude (rad).
    pub fn attitude_error(&self) -> f64 {
        self.q.angle_to(&self.q_des)
    }

    pub fn position_error(&self) -> Vector3<f64> {
        self.p - self.p_des
    }

    fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(LOG_COLUMNS.len());
        let quat = |q: &UnitQuaternion<f64>| [q.w, q.i, q.j, q.k];
        v.push(self.t);
        v.extend(self.p.iter());
        v.extend(self.v.iter());
        v.extend(quat(&self.q));
        v.extend(self.w.iter());
        v.extend(self.rotors);
        v.extend(self.p_des.iter());
        v.extend(self.v_des.iter());
        v.extend(quat(&self.q_des));
        v.push(self.thrust_cmd);
        v.extend(self.torque_cmd.iter());
        v.extend(self.rotors_cmd);
        for x in [
            &self.accel_ext,
            &self.torque_ext,
            &self.accel_res,
            &self.torque_res,
            &self.f_ge,
            &self.f_drag,
            &self.tau_ge,
        ] {
            v.extend(x.iter());
        }
        v.push(self.h);
        v.push(if self.saturated { 1.0 } else { 0.0 });
        v.push(if self.infeasible { 1.0 } else { 0.0 });
        v
    }

    fn from_values(v: &[f64]) -> Self {
        let mut i = 0;
        let mut take = |n: usize| {
            let s = &v[i..i + n];
            i += n;
            s
        };
        let t = take(1)[0];
        let v3 = |s: &[f64]| Vector3::new(s[0], s[1], s[2]);
        let q = |s: &[f64]| UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(s[0], s[1], s[2], s[3]));
        let a4 = |s: &[f64]| [s[0], s[1], s[2], s[3]];
        Self {
            t,
            p: v3(take(3)),
            v: v3(take(3)),
            q: q(take(4)),
            w: v3(take(3)),
            rotors: a4(take(4)),
            p_des: v3(take(3)),
            v_des: v3(take(3)),
            q_des: q(take(4)),
            thrust_cmd: take(1)[0],
            torque_cmd: v3(take(3)),
            rotors_cmd: a4(take(4)),
            accel_ext: v3(take(3)),
            torque_ext: v3(take(3)),
            accel_res: v3(take(3)),
            torque_res: v3(take(3)),
            f_ge: v3(take(3)),
            f_drag: v3(take(3)),
            tau_ge: v3(take(3)),
            h: take(1)[0],
            saturated: take(1)[0] != 0.0,
            infeasible: take(1)[0] != 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    /// Time of ground contact when the run ended in a crash.
    pub crashed: Option<f64>,
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LOG_COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.values().iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().ne(LOG_COLUMNS.iter().copied()) {
            return Err(Error::Input("CSV header does not match the trajectory log schema".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Input(format!("row {}: `{s}` is not a number", i + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(LogRow::from_values(&vals));
        }
        Ok(Self { rows, crashed: None })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Every `k`-th row.
    pub fn decimated(&self, k: usize) -> Self {
        Self {
            rows: self.rows.iter().step_by(k.max(1)).copied().collect(),
            crashed: self.crashed,
        }
    }

    pub fn any_infeasible(&self) -> bool {
        self.rows.iter().any(|r| r.infeasible)
    }
}
