use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use nearground::estimation::{fit_fg, measure_fg_flight, measure_fg_platform, spearman};
use nearground::flatness::{ref_thrust_attitude, FlatModel, FlatOutput};
use nearground::groundfx::GroundEffectParams;
use nearground::harness::metrics::position_stats;
use nearground::harness::runner::{run, RunStatus};
use nearground::harness::Scenario;
use nearground::sim::{LogRow, Plant, RigidState, SimConfig, TrajectoryLog};
use nearground::vehicle::{composite_speeds, thrust_from_speeds, RotorSpeeds, VehicleParams};
use nearground::GRAVITY;

fn scenario_text(extra: &str) -> Scenario {
    Scenario::parse(&format!("seed = 5\nname = prop\n{extra}")).unwrap()
}

fn rotation() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-0.6f64..0.6, -0.6f64..0.6, -3.0f64..3.0).prop_map(|(r, p, y)| UnitQuaternion::from_euler_angles(r, p, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_collective_times_k_t_is_thrust(n in prop::array::uniform4(0.0f64..20_000.0)) {
        let v = VehicleParams::default();
        let speeds = RotorSpeeds(n);
        let t = thrust_from_speeds(&speeds, &v);
        let via_base = composite_speeds(&speeds, &v)[0] * v.k_t;
        prop_assert!((t - via_base).abs() <= 1e-12 * t.abs().max(1e-12));
    }

    #[test]
    fn leveling_torque_has_no_body_z_and_is_linear_in_thrust(
        q in rotation(),
        h in 0.02f64..2.0,
        thrust in 0.1f64..20.0,
        k in 0.1f64..5.0,
    ) {
        let g = GroundEffectParams::default();
        let rot = *q.to_rotation_matrix().matrix();
        let tau = g.leveling_torque(&rot, thrust, h).unwrap();
        prop_assert!(tau.z.abs() <= 1e-15 * tau.norm().max(1e-300));
        let scaled = g.leveling_torque(&rot, k * thrust, h).unwrap();
        prop_assert!((scaled - k * tau).norm() <= 1e-12 * scaled.norm().max(1e-300));
    }

    #[test]
    fn fg_prime_matches_central_difference(h in 0.01f64..2.0) {
        let g = GroundEffectParams::default();
        let e = 1e-6;
        let fd = (g.fg(h + e).unwrap() - g.fg(h - e).unwrap()) / (2.0 * e);
        let exact = g.fg_prime(h).unwrap();
        prop_assert!(((fd - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn quaternion_stays_unit(w in prop::array::uniform3(-8.0f64..8.0), q in rotation()) {
        let plant = Plant::new(VehicleParams::default(), GroundEffectParams::default(), SimConfig::default()).unwrap();
        let n = plant.vehicle.equal_speed_for_thrust(plant.vehicle.mass * GRAVITY);
        let mut s = RigidState { q, w: Vector3::from(w), rotors: [n; 4], ..RigidState::at_rest(Vector3::new(0.0, 0.0, 1.0)) };
        for k in 0..400 {
            s = plant.step(&s, &RotorSpeeds::equal(n), k as f64 * 5e-4, 5e-4).unwrap();
            prop_assert!((s.q.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn force_balance_iteration_converges_quickly(
        v in prop::array::uniform3(-1.0f64..1.0),
        speed in 0.0f64..5.0,
        a in prop::array::uniform3(-3.0f64..3.0),
        z in 0.05f64..2.0,
        yaw in -3.0f64..3.0,
    ) {
        let dir = Vector3::from(v);
        prop_assume!(dir.norm() > 1e-3);
        let mut flat = FlatOutput::hover(Vector3::new(0.0, 0.0, z), yaw);
        flat.v = dir.normalize() * speed;
        flat.a = Vector3::from(a);
        let model = FlatModel::new(VehicleParams::default(), GroundEffectParams::default(), GRAVITY).unwrap();
        let (_, _, iters) = ref_thrust_attitude(&flat, &model).unwrap();
        prop_assert!(iters <= 20);
    }

    #[test]
    fn spearman_is_rank_invariant(
        x in prop::collection::vec(-100.0f64..100.0, 5..40),
        seed in 0u64..1000,
    ) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 0.3 + ((i as u64 * 31 + seed) % 17) as f64).sin()).collect();
        prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
        let base = spearman(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| (v / 50.0).exp() * 3.0 - 1.0).collect();
        let ty: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        prop_assert!((spearman(&tx, &ty).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn noiseless_fg_fit_residual_is_negligible(g1 in 0.02f64..0.3, g2 in 0.005f64..0.2) {
        let samples: Vec<(f64, f64)> = (0..40).map(|i| {
            let h = 0.05 + 1.5 * i as f64 / 39.0;
            (h, g2 / (h * h + g1))
        }).collect();
        let rep = fit_fg(&samples).unwrap();
        let scale = g2 / g1;
        prop_assert!(rep.residual_rms < 1e-8 * scale);
    }

    #[test]
    fn fg_measurement_routes_agree(fg in 0.0f64..1.0, thrust in 1.0f64..20.0, mass in 0.3f64..3.0) {
        let platform = measure_fg_platform(thrust * (1.0 + fg), thrust).unwrap();
        let flight = measure_fg_flight(fg * thrust / mass, thrust, mass).unwrap();
        prop_assert!((platform - flight).abs() < 1e-12);
    }

    #[test]
    fn log_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 40), sat in any::<bool>()) {
        let mut row = LogRow::from_zeros();
        row.t = values[0];
        row.p = Vector3::new(values[1], values[2], values[3]);
        row.v = Vector3::new(values[4], values[5], values[6]);
        row.q = UnitQuaternion::from_euler_angles(values[7] * 1e-6, values[8] * 1e-6, values[9] * 1e-6);
        row.w = Vector3::new(values[10], values[11], values[12]);
        row.rotors = [values[13], values[14], values[15], values[16]];
        row.thrust_cmd = values[17];
        row.accel_ext = Vector3::new(values[18], values[19], values[20]);
        row.torque_res = Vector3::new(values[21], 1.0 / 3.0, f64::MIN_POSITIVE);
        row.h = values[22];
        row.saturated = sat;
        let log = TrajectoryLog { rows: vec![row; 3], crashed: None };
        let back = TrajectoryLog::read_csv(log.to_csv_string().unwrap().as_bytes()).unwrap();
        prop_assert_eq!(back, log);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn metrics_are_decimation_invariant(seed in 0u64..1000) {
        let s = scenario_text(&format!(
            "seed = {seed}\ntraj.type = lemniscate\ntraj.height = 0.3\nduration = 8\nsim.accel_noise = 0.05\nsim.gyro_noise = 0.005\nsim.mismatch = 0.05\nmetrics.skip = 1"
        ));
        let out = run(&s).unwrap();
        let full = position_stats(&out.log, 1.0).unwrap();
        let dec = position_stats(&out.log.decimated(10), 1.0).unwrap();
        for (a, b) in [(full.rmse_all, dec.rmse_all), (full.rmse_xoy, dec.rmse_xoy), (full.rmse_z, dec.rmse_z)] {
            prop_assert!((a - b).abs() <= 0.01 * a, "{} vs {}", a, b);
        }
    }

    #[test]
    fn same_seed_same_log(seed in 0u64..1000) {
        let s = scenario_text(&format!(
            "seed = {seed}\ntraj.type = hover\ntraj.height = 0.2\nduration = 1\nsim.accel_noise = 0.1\nsim.gyro_noise = 0.01"
        ));
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        prop_assert_eq!(a.log.to_csv_string().unwrap(), b.log.to_csv_string().unwrap());
        prop_assert_eq!(a.metrics.to_json().unwrap(), b.metrics.to_json().unwrap());
    }
}

#[test]
fn crash_is_reported_with_nonzero_exit() {
    let s = scenario_text("traj.type = hover\ntraj.height = 0.15\nduration = 3\nsim.ext_force = 0, 0, -30\nsim.min_clearance = 0.02");
    let out = run(&s).unwrap();
    assert_eq!(out.status, RunStatus::Crashed);
    assert!(out.log.crashed.is_some());
    assert_ne!(out.status.exit_code(), 0);
    assert_eq!(out.metrics.crashed_at, out.log.crashed);
}

#[test]
fn different_seeds_differ_under_noise() {
    let text = |seed: u64| format!("seed = {seed}\ntraj.type = hover\nduration = 0.5\nsim.gyro_noise = 0.01");
    let a = run(&scenario_text(&text(1))).unwrap();
    let b = run(&scenario_text(&text(2))).unwrap();
    assert_ne!(a.log.to_csv_string().unwrap(), b.log.to_csv_string().unwrap());
}
