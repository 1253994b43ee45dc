//! Experiment harness: scenario files, runs, metrics and standalone checks.

pub mod curves;
pub mod metrics;
pub mod oracle;
pub mod runner;
pub mod scenario;

pub use metrics::{compare, Comparison, MetricsReport};
pub use oracle::{run_check, OracleReport};
pub use runner::{exit_code_for, run, sweep, write_run_dir, RunOutcome, RunStatus};
pub use scenario::{Scenario, TrajectorySpec};
