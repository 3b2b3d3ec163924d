//! Child side of the evaluation protocol.
//!
//! The supervisor writes a [`WorkerTask`] as JSON and starts the worker with
//! its path as the only argument. The worker runs the full LNS with the
//! candidate's operators and prints exactly one [`ResultRecord`] as a JSON
//! line on stdout, then exits 0. Any other outcome is a failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vrpagent_core::{io as instance_io, validate, LnsConfig};

use crate::ffi;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerTask {
    pub library: PathBuf,
    pub instance: PathBuf,
    pub id: String,
    pub seed: u64,
    pub time_limit: f64,
    pub iteration_limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub id: String,
    pub objective: f64,
    pub feasible: bool,
    pub iterations: u64,
    pub tours: Vec<Vec<usize>>,
}

/// Exit codes other than 0, for the supervisor's diagnostics.
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_SETUP: i32 = 65;
pub const EXIT_OPERATOR: i32 = 70;

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("vrpagent-worker: {msg}");
    code
}

/// Runs one task; returns the process exit code.
pub fn run_task(path: &Path) -> i32 {
    let task: WorkerTask = match std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(t) => t,
        Err(e) => return fail(EXIT_SETUP, format!("bad task {}: {e}", path.display())),
    };
    let instance = match instance_io::load(&task.instance) {
        Ok(i) => i,
        Err(e) => return fail(EXIT_SETUP, e),
    };
    let ops = match ffi::load(&task.library, &instance, task.seed) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_SETUP, e),
    };
    let config = LnsConfig {
        time_limit: task.time_limit,
        iteration_limit: task.iteration_limit,
        seed: task.seed,
        record_trace: false,
        ..LnsConfig::default()
    };
    let (best, stats) = match vrpagent_core::run(&instance, &ops, &config) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_OPERATOR, e),
    };
    drop(ops);
    let record = ResultRecord {
        id: task.id,
        objective: best.objective(),
        feasible: validate(&best, &instance).feasible(),
        iterations: stats.iterations,
        tours: best.routes(),
    };
    let line = serde_json::to_string(&record).expect("record serializes");
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{line}").and_then(|_| out.flush()).is_err() {
        return fail(EXIT_SETUP, "stdout closed");
    }
    0
}

/// Entry point for binaries hosting the worker: `args` excludes argv[0].
pub fn main_with_args(args: &[String]) -> i32 {
    match args {
        [task] => run_task(Path::new(task)),
        _ => fail(EXIT_USAGE, "usage: vrpagent-worker <task.json>"),
    }
}
