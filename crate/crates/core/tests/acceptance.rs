//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured numbers before asserting.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nearground::estimation::{fit_drag, fit_fg, fit_mg, spearman, DragSampleRow, MgSample};
use nearground::flatness::Trajectory;
use nearground::groundfx::GroundEffectParams;
use nearground::harness::metrics::{profile_flatness, profile_peak};
use nearground::harness::oracle::{self, OracleReport};
use nearground::harness::runner::{run, run_many};
use nearground::harness::Scenario;
use nearground::vehicle::VehicleParams;
use nearground::GRAVITY;

fn scenario(file: &str, overrides: &[(&str, &str)]) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(file);
    let ov: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    Scenario::load(&path, &ov).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn verdict(n: u32, pass: bool, detail: &str) -> bool {
    println!("criterion {n}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn oracle_line(reports: &[OracleReport]) -> String {
    reports.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("; ")
}

#[test]
fn criterion_01_torque_closed_form_vs_quadrature() {
    let start = Instant::now();
    let reports = oracle::run_check("quadrature").unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = reports.iter().all(|r| r.passed) && secs < 5.0;
    assert!(verdict(1, pass, &format!("{} ; {secs:.2} s", oracle_line(&reports))));
}

#[test]
fn criterion_02_derivative_identity() {
    let reports = oracle::run_check("mg-identity").unwrap();
    let pass = reports.iter().all(|r| r.passed);
    assert!(verdict(2, pass, &oracle_line(&reports)));
}

#[test]
fn criterion_03_rotational_model_equivalence() {
    let r = oracle::rotational_equivalence(
        &VehicleParams::default(),
        &GroundEffectParams::default(),
        5f64.to_radians(),
        1.0,
    )
    .unwrap();
    assert!(verdict(3, r.passed, &r.to_string()));
}

#[test]
fn criterion_04_flatness_feedforward() {
    let ff = scenario("lemniscate_ff.cfg", &[]);
    let period = match ff.build_trajectory().unwrap() {
        Trajectory::Lemniscate(l) => l.period(),
        other => panic!("expected a lemniscate, got {other:?}"),
    };
    let start = Instant::now();
    let out = run(&ff).unwrap();
    let ff_secs = start.elapsed().as_secs_f64();
    // Largest error growth within any complete period.
    let rows = &out.log.rows;
    let mut drift = 0.0f64;
    let mut k = 0;
    while (k + 1) as f64 * period <= ff.duration + 1e-9 {
        let (t0, t1) = (k as f64 * period, (k + 1) as f64 * period);
        let window: Vec<_> = rows.iter().filter(|r| r.t >= t0 && r.t <= t1).collect();
        let e0 = window[0].position_error();
        for r in &window {
            drift = drift.max((r.position_error() - e0).norm());
        }
        k += 1;
    }

    let fb = scenario("lemniscate.cfg", &[]);
    let start = Instant::now();
    let fb_out = run(&fb).unwrap();
    let fb_secs = start.elapsed().as_secs_f64();
    let rmse = fb_out.metrics.rmse_all_cm;

    let pass = k >= 1 && drift < 0.05 && rmse < 1.0 && ff_secs < 10.0 && fb_secs < 10.0;
    assert!(verdict(
        4,
        pass,
        &format!(
            "feedforward drift {:.2} cm per period over {k} periods of {period:.2} s ({ff_secs:.2} s); \
             feedback RMSE {rmse:.4} cm ({fb_secs:.2} s)",
            drift * 100.0
        )
    ));
}

#[test]
fn criterion_05_hover_descent_profile() {
    let none = run(&scenario("descent_none.cfg", &[])).unwrap();
    let hybrid = run(&scenario("descent_hybrid.cfg", &[])).unwrap();
    let argmax = GroundEffectParams::default().mg_argmax();
    let (peak_h, peak_deg) = profile_peak(&none.metrics.angle_profile).expect("profile");
    let flat = profile_flatness(&hybrid.metrics.angle_profile).expect("profile");
    let pass = (peak_h - argmax).abs() <= 0.05 && flat < 1.2;
    assert!(verdict(
        5,
        pass,
        &format!(
            "uncompensated peak {peak_deg:.4} deg at h = {peak_h:.3} m (M_G argmax {argmax:.3} m); \
             hybrid max/mean {flat:.3}"
        )
    ));
}

#[test]
fn criterion_06_controller_comparison_under_mismatch() {
    let seeds: Vec<u64> = (1..=10).collect();
    let modes = [("none", "none"), ("model", "hybrid"), ("model", "model"), ("model", "indi")];
    let mut scenarios = Vec::new();
    for &seed in &seeds {
        for (a, t) in modes {
            let seed_s = seed.to_string();
            scenarios.push(scenario(
                "mismatch.cfg",
                &[("seed", &seed_s), ("ctrl.accel_comp", a), ("ctrl.torque_comp", t)],
            ));
        }
    }
    let outcomes: Vec<_> = run_many(&scenarios, 4)
        .unwrap()
        .into_iter()
        .map(|o| o.unwrap().metrics)
        .collect();
    let mut none_rmse = 0.0;
    let mut full_rmse = 0.0;
    let mut hybrid_wins = 0;
    for chunk in outcomes.chunks(modes.len()) {
        let (none, full, model, indi) = (&chunk[0], &chunk[1], &chunk[2], &chunk[3]);
        none_rmse += none.rmse_all_cm;
        full_rmse += full.rmse_all_cm;
        if full.attitude_rmse_deg < model.attitude_rmse_deg && full.attitude_rmse_deg < indi.attitude_rmse_deg {
            hybrid_wins += 1;
        }
    }
    let reduction = 1.0 - full_rmse / none_rmse;
    let pass = reduction >= 0.40 && hybrid_wins >= 9;
    assert!(verdict(
        6,
        pass,
        &format!(
            "mean RMSE {:.3} cm -> {:.3} cm ({:.1}% reduction); hybrid best attitude in {hybrid_wins}/10 seeds",
            none_rmse / 10.0,
            full_rmse / 10.0,
            reduction * 100.0
        )
    ));
}

#[test]
fn criterion_07_identification_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.02).unwrap();

    let (g1, g2) = (0.09, 0.0405);
    let fg_samples: Vec<(f64, f64)> = (0..200)
        .map(|_| {
            let h: f64 = rng.random_range(0.05..1.5);
            (h, g2 / (h * h + g1) * (1.0 + noise.sample(&mut rng)))
        })
        .collect();
    let fg = fit_fg(&fg_samples).unwrap();
    let fg_err = [(fg.params[0] - g1) / g1, (fg.params[1] - g2) / g2].map(f64::abs);

    let (g3, g4, g5) = (0.1, 0.1152, 0.002);
    let mg_samples: Vec<MgSample> = (0..200)
        .map(|_| {
            let h: f64 = rng.random_range(0.05..1.0);
            let delta = rng.random_range(1.0..10.0f64).to_radians();
            let thrust = rng.random_range(6.0..10.0);
            let d = h * h + g3 * h + g4;
            let torque = g5 * h / (d * d) * thrust * delta.sin() * (1.0 + noise.sample(&mut rng));
            MgSample { h, delta, thrust, torque }
        })
        .collect();
    let mg = fit_mg(&mg_samples).unwrap();
    let mg_err = [
        (mg.params[0] - g3) / g3,
        (mg.params[1] - g4) / g4,
        (mg.params[2] - g5) / g5,
    ]
    .map(f64::abs);

    // Drag: the same lemniscate flown near the ground and in free air.
    let mut dx = Vec::new();
    for height in ["0.1", "2.0"] {
        let s = scenario(
            "lemniscate.cfg",
            &[("traj.height", height), ("duration", "12"), ("metrics.skip", "0")],
        );
        let out = run(&s).unwrap();
        let rows: Vec<_> = DragSampleRow::from_log(&out.log).into_iter().skip(500).collect();
        dx.push(fit_drag(&rows, s.vehicle.mass).unwrap().dx);
    }
    let ratio = dx[0] / dx[1];

    let worst_fg = fg_err.iter().copied().fold(0.0, f64::max);
    let worst_mg = mg_err.iter().copied().fold(0.0, f64::max);
    let pass = worst_fg < 0.05 && worst_mg < 0.05 && (ratio - 0.5963).abs() <= 0.02;
    assert!(verdict(
        7,
        pass,
        &format!(
            "fg worst rel err {:.2}% (g1 {:.5}, g2 {:.5}); mg worst rel err {:.2}% (g3 {:.4}, g4 {:.4}, g5 {:.5}); \
             drag ratio {ratio:.4}",
            worst_fg * 100.0,
            fg.params[0],
            fg.params[1],
            worst_mg * 100.0,
            mg.params[0],
            mg.params[1],
            mg.params[2]
        )
    ));
}

/// Rank of `x[i]` by direct counting: 1 + smaller values + half the ties.
fn brute_rank(x: &[f64], i: usize) -> f64 {
    let less = x.iter().filter(|v| **v < x[i]).count() as f64;
    let equal = x.iter().filter(|v| **v == x[i]).count() as f64;
    1.0 + less + (equal - 1.0) / 2.0
}

fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let rx: Vec<f64> = (0..n).map(|i| brute_rank(x, i)).collect();
    let ry: Vec<f64> = (0..n).map(|i| brute_rank(y, i)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n as f64;
    let sd = |v: &[f64], m: f64| (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    cov / (sd(&rx, mx) * sd(&ry, my))
}

#[test]
fn criterion_08_spearman_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(5..60);
        // Small integer alphabets force ties.
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.5).collect();
        if x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
            continue;
        }
        worst = worst.max((spearman(&x, &y).unwrap() - brute_spearman(&x, &y)).abs());
    }
    let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).exp()).collect();
    let up: Vec<f64> = xs.iter().map(|v| v.ln() * 3.0 + 1.0).collect();
    let down: Vec<f64> = xs.iter().map(|v| -v.powi(3)).collect();
    let (r_up, r_down) = (spearman(&xs, &up).unwrap(), spearman(&xs, &down).unwrap());
    let pass = worst <= 1e-12 && r_up == 1.0 && r_down == -1.0;
    assert!(verdict(
        8,
        pass,
        &format!("worst |diff| vs direct definition {worst:.2e}; monotone cases {r_up}, {r_down}")
    ));
}

#[test]
fn criterion_09_determinism() {
    let mut all_equal = true;
    let mut checked = Vec::new();
    for file in ["mismatch.cfg", "descent_hybrid.cfg", "lemniscate_ff.cfg"] {
        let s = scenario(file, &[("duration", "6")]);
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        let parallel = run_many(&[s.clone(), s.clone()], 2).unwrap();
        let csv_a = a.log.to_csv_string().unwrap();
        let json_a = a.metrics.to_json().unwrap();
        let same = csv_a == b.log.to_csv_string().unwrap()
            && json_a == b.metrics.to_json().unwrap()
            && parallel.iter().all(|p| {
                let p = p.as_ref().unwrap();
                p.log.to_csv_string().unwrap() == csv_a && p.metrics.to_json().unwrap() == json_a
            });
        all_equal &= same;
        checked.push(format!("{file}: {}", if same { "identical" } else { "DIFFERENT" }));
    }
    assert!(verdict(9, all_equal, &checked.join(", ")));
}

#[test]
fn criterion_10_observer_identity() {
    let quiet = [
        ("sim.accel_noise", "0"),
        ("sim.gyro_noise", "0"),
        ("sim.ext_force", "0, 0, 0"),
        ("sim.mismatch", "0"),
    ];
    let vehicle = VehicleParams::default();
    let accel_limit = 0.01 * GRAVITY;
    let torque_limit = 0.01 * vehicle.hover_torque_scale();
    let mut pass = true;
    let mut parts = Vec::new();
    for file in ["hover.cfg", "lemniscate.cfg", "descent_hybrid.cfg"] {
        let s = scenario(file, &quiet);
        let m = run(&s).unwrap().metrics;
        pass &= m.max_accel_residual < accel_limit && m.max_torque_residual < torque_limit;
        parts.push(format!(
            "{}: accel {:.2e} m/s^2, torque {:.2e} N m",
            s.name, m.max_accel_residual, m.max_torque_residual
        ));
    }
    let detail = format!(
        "{} (limits {accel_limit:.3} m/s^2, {torque_limit:.4} N m)",
        parts.join("; ")
    );
    assert!(verdict(10, pass, &detail));
}
