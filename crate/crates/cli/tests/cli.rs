use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nearground"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("process exited normally")
}

fn short_hover(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("short.cfg");
    let text = format!(
        "vehicle_file = {}\nname = short\nseed = 1\ntraj.type = hover\n{extra}",
        scenarios().join("vehicle.cfg").display()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_the_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = bin()
        .args(["run", scenarios().join("hover.cfg").to_str().unwrap(), "--set", "duration=0.5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = out.join("hover");
    for f in ["scenario.resolved", "log.csv", "metrics.json", "curve_model.csv", "curve_position_error.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_hover(tmp.path(), "traj.height = 0.3\nduration = 0.5\nno.such.key = 3\n");
    let o = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn crash_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_hover(tmp.path(), "traj.height = 0.15\nduration = 3\nsim.ext_force = 0, 0, -30\n");
    let o = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(tmp.path().join("short/log.csv").is_file());
}

#[test]
fn identify_fg_recovers_parameters_and_rank_loss_exits_with_five() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("fg.csv");
    let mut text = String::from("h,fg\n");
    for i in 0..30 {
        let h = 0.05 + 0.05 * i as f64;
        text.push_str(&format!("{h},{}\n", 0.0405 / (h * h + 0.09)));
    }
    fs::write(&good, text).unwrap();
    let o = bin().arg("identify").arg("fg").arg(&good).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("fit_fg.json")).unwrap()).unwrap();
    let params = json["params"].as_array().unwrap();
    assert!((params[0].as_f64().unwrap() - 0.09).abs() < 1e-6);
    assert!((params[1].as_f64().unwrap() - 0.0405).abs() < 1e-6);

    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "h,fg\n0.2,0.3\n0.2,0.3\n0.2,0.3\n0.2,0.3\n").unwrap();
    let o = bin().arg("identify").arg("fg").arg(&flat).output().unwrap();
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn oracle_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().args(["oracle", "mg-identity", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS mg-identity"));
    assert!(tmp.path().join("oracle.json").is_file());

    let o = bin().args(["oracle", "bogus"]).output().unwrap();
    assert_eq!(code(&o), 1);

    let cfg = short_hover(tmp.path(), "traj.height = 0.3\nduration = 0.5\n");
    let sweep_out = tmp.path().join("sweep");
    let o = bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--param", "traj.height", "--values", "0.2", "0.4", "--jobs", "2", "--out"])
        .arg(&sweep_out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sweep_out.join("sweep_summary.csv").is_file());
    let metrics: Vec<PathBuf> = fs::read_dir(&sweep_out)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path().join("metrics.json");
            p.is_file().then_some(p)
        })
        .collect();
    assert_eq!(metrics.len(), 2);
    let o = bin().arg("compare").args(&metrics).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
