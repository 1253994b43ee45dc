use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nearground::config::KvConfig;
use nearground::estimation::{
    fit_drag, fit_fg, fit_mg, measure_fg_flight, measure_fg_platform, normalize_coeff, DragSampleRow, MgSample,
};
use nearground::harness::runner::{self, exit_code};
use nearground::harness::{compare, run_check, MetricsReport, Scenario};
use nearground::sim::TrajectoryLog;
use nearground::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "nearground", version, about = "Near-ground multicopter simulation and identification")]
struct Cli {
    /// Output directory (runs and sweeps default to `runs`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario file.
    Run {
        scenario: PathBuf,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_parser = parse_kv)]
        set: Vec<(String, String)>,
    },
    /// Run a scenario once per value of one key.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<String>,
        #[arg(long = "set", value_parser = parse_kv)]
        set: Vec<(String, String)>,
    },
    /// Fit a ground-effect model to measurements.
    Identify {
        op: IdentifyOp,
        input: PathBuf,
        /// Vehicle mass for log-based fits (kg).
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        /// Free-air coefficient for `normalize` (default: top-decile mean).
        #[arg(long)]
        k_inf: Option<f64>,
    },
    /// Tabulate metrics.json files against a baseline.
    Compare {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Name of the baseline report (default: the first file).
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Run a standalone numerical check (`all` runs every check).
    Oracle { check: String },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IdentifyOp {
    /// `h, fg` or `h, force_z, thrust` platform data.
    Fg,
    /// `h, fg` from a flight log (`log.csv`) via the wrench observer.
    FgFlight,
    /// `h, delta_deg, thrust, torque` platform data.
    Mg,
    /// Body-frame drag slopes from a flight log.
    Drag,
    /// `h, k` coefficient samples normalised against free air.
    Normalize,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            runner::exit_code_for(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { scenario, set } => cmd_run(cli, scenario, set),
        Command::Sweep {
            scenario,
            param,
            values,
            set,
        } => cmd_sweep(cli, scenario, param, values, set),
        Command::Identify { op, input, mass, k_inf } => cmd_identify(cli, *op, input, *mass, *k_inf),
        Command::Compare { metrics, baseline } => cmd_compare(cli, metrics, baseline.as_deref()),
        Command::Oracle { check } => cmd_oracle(cli, check),
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn overrides(cli: &Cli, set: &[(String, String)]) -> Vec<(String, String)> {
    let mut all = set.to_vec();
    if let Some(seed) = cli.seed {
        all.push(("seed".into(), seed.to_string()));
    }
    all
}

fn summary_line(m: &MetricsReport) -> String {
    let mut s = format!(
        "{}: rmse {:.3} cm (xoy {:.3}, z {:.3}), max {:.3} cm, attitude {:.3} deg",
        m.name, m.rmse_all_cm, m.rmse_xoy_cm, m.rmse_z_cm, m.max_err_cm, m.attitude_rmse_deg
    );
    if let Some(t) = m.crashed_at {
        s.push_str(&format!(", CRASHED at {t:.3} s"));
    }
    if m.infeasible {
        s.push_str(", reference infeasible");
    }
    s
}

fn cmd_run(cli: &Cli, path: &Path, set: &[(String, String)]) -> Result<i32> {
    let scenario = Scenario::load(path, &overrides(cli, set))?;
    let outcome = runner::run(&scenario)?;
    let dir = runner::run_dir(&out_dir(cli), &scenario.name);
    runner::write_run_dir(&dir, &scenario, &outcome)?;
    println!("{}", summary_line(&outcome.metrics));
    println!("wrote {}", dir.display());
    Ok(outcome.status.exit_code())
}

fn cmd_sweep(cli: &Cli, path: &Path, param: &str, values: &[String], set: &[(String, String)]) -> Result<i32> {
    let mut cfg = KvConfig::load(path)?;
    for (k, v) in overrides(cli, set) {
        cfg.set(&k, v);
    }
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = out_dir(cli);
    let results = runner::sweep(&cfg, path.parent(), param, values, jobs)?;
    let mut code = exit_code::OK;
    let mut reports = Vec::new();
    for r in results {
        match (&r.scenario, &r.outcome) {
            (Some(s), Ok(o)) => {
                runner::write_run_dir(&runner::run_dir(&out, &r.label), s, o)?;
                println!("{}", summary_line(&o.metrics));
                if code == exit_code::OK {
                    code = o.status.exit_code();
                }
                reports.push(o.metrics.clone());
            }
            (_, Err(e)) => {
                eprintln!("{}: error: {e}", r.label);
                if code == exit_code::OK {
                    code = runner::exit_code_for(e);
                }
            }
            (None, Ok(_)) => unreachable!("an outcome always has its scenario"),
        }
    }
    if !reports.is_empty() {
        let table = compare(&reports, None)?;
        fs::create_dir_all(&out)?;
        fs::write(out.join("sweep_summary.csv"), table.to_csv()?)?;
        print!("{}", table.to_text());
    }
    Ok(code)
}

/// Named numeric columns of a CSV file.
struct Columns {
    path: PathBuf,
    data: HashMap<String, Vec<f64>>,
}

impl Columns {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut data: HashMap<String, Vec<f64>> = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            for (h, field) in headers.iter().zip(rec.iter()) {
                let x = field.trim().parse::<f64>().map_err(|_| {
                    Error::Input(format!("{}: row {}, column `{h}`: `{field}` is not a number", path.display(), i + 2))
                })?;
                data.get_mut(h).expect("header registered").push(x);
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            data,
        })
    }

    fn has(&self, name: &str) -> bool {
        self.data.contains_key(name)
    }

    fn get(&self, name: &str) -> Result<&[f64]> {
        self.data
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Input(format!("{}: missing column `{name}`", self.path.display())))
    }
}

fn write_output(cli: &Cli, file: &str, text: &str) -> Result<()> {
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        let path = dir.join(file);
        fs::write(&path, text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_identify(cli: &Cli, op: IdentifyOp, input: &Path, mass: f64, k_inf: Option<f64>) -> Result<i32> {
    match op {
        IdentifyOp::Fg => {
            let c = Columns::read(input)?;
            let h = c.get("h")?;
            let samples: Vec<(f64, f64)> = if c.has("fg") {
                h.iter().copied().zip(c.get("fg")?.iter().copied()).collect()
            } else {
                let (fz, t) = (c.get("force_z")?, c.get("thrust")?);
                h.iter()
                    .zip(fz.iter().zip(t))
                    .map(|(&h, (&fz, &t))| Ok((h, measure_fg_platform(fz, t)?)))
                    .collect::<Result<_>>()?
            };
            let fit = fit_fg(&samples)?;
            println!("{fit}");
            write_output(cli, "fit_fg.json", &fit.to_json()?)?;
        }
        IdentifyOp::FgFlight => {
            let log = TrajectoryLog::load(input)?;
            let mut samples = Vec::new();
            for r in &log.rows {
                match measure_fg_flight(r.accel_ext.z, r.thrust_cmd, mass) {
                    Ok(fg) => samples.push((r.h, fg)),
                    Err(e) => log::warn!("t = {:.3}: {e}", r.t),
                }
            }
            let fit = fit_fg(&samples)?;
            println!("{fit}");
            write_output(cli, "fit_fg_flight.json", &fit.to_json()?)?;
        }
        IdentifyOp::Mg => {
            let c = Columns::read(input)?;
            let (h, d, t, tau) = (c.get("h")?, c.get("delta_deg")?, c.get("thrust")?, c.get("torque")?);
            let samples: Vec<MgSample> = (0..h.len())
                .map(|i| MgSample {
                    h: h[i],
                    delta: d[i].to_radians(),
                    thrust: t[i],
                    torque: tau[i],
                })
                .collect();
            let fit = fit_mg(&samples)?;
            println!("{fit}");
            write_output(cli, "fit_mg.json", &fit.to_json()?)?;
        }
        IdentifyOp::Drag => {
            let log = TrajectoryLog::load(input)?;
            let fit = fit_drag(&DragSampleRow::from_log(&log), mass)?;
            println!(
                "drag at mean h = {:.3} m over {} samples: dx = {:.4} ± {:.4} N·s/m, dy = {:.4} ± {:.4} N·s/m",
                fit.h, fit.samples, fit.dx, fit.dx_se, fit.dy, fit.dy_se
            );
            write_output(cli, "fit_drag.json", &serde_json::to_string_pretty(&fit)?)?;
        }
        IdentifyOp::Normalize => {
            let c = Columns::read(input)?;
            let samples: Vec<(f64, f64)> = c.get("h")?.iter().copied().zip(c.get("k")?.iter().copied()).collect();
            let norm = normalize_coeff(&samples, k_inf)?;
            let mut text = String::from("h,k_bar\n");
            for (h, k) in &norm {
                text.push_str(&format!("{h},{k}\n"));
            }
            print!("{text}");
            write_output(cli, "normalized.csv", &text)?;
        }
    }
    Ok(exit_code::OK)
}

fn cmd_compare(cli: &Cli, files: &[PathBuf], baseline: Option<&str>) -> Result<i32> {
    let reports = files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f)?;
            MetricsReport::from_json(&text).map_err(|e| Error::Input(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = compare(&reports, baseline)?;
    print!("{}", table.to_text());
    write_output(cli, "comparison.csv", &table.to_csv()?)?;
    Ok(exit_code::OK)
}

fn cmd_oracle(cli: &Cli, check: &str) -> Result<i32> {
    let reports = run_check(check)?;
    for r in &reports {
        println!("{r}");
    }
    write_output(cli, "oracle.json", &serde_json::to_string_pretty(&reports)?)?;
    Ok(if reports.iter().all(|r| r.passed) {
        exit_code::OK
    } else {
        exit_code::OTHER
    })
}
