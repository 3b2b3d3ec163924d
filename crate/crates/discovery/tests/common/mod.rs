#![allow(dead_code)]

use std::path::{Path, PathBuf};

use vrpagent_core::{generate, io, GenParams, ProblemKind};
use vrpagent_discovery::prompts::seed_code;
use vrpagent_discovery::{Compiler, Evaluator, WorkerCommand};

pub fn worker() -> WorkerCommand {
    WorkerCommand::new(env!("CARGO_BIN_EXE_vrpagent-worker"))
}

/// Evaluator with its build cache under `dir`.
pub fn evaluator(dir: &Path) -> Evaluator {
    let mut e = Evaluator::new(Compiler::new(dir.join("cache")), worker());
    e.workers = 4;
    e
}

/// Generated instances with `n` customers each, saved under `dir`.
pub fn instances(dir: &Path, kind: ProblemKind, sizes: &[usize], seed: u64) -> Vec<PathBuf> {
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let inst = generate(&GenParams::new(kind, n, seed + i as u64)).unwrap();
            let path = dir.join(format!("{}-n{n}-s{}.vrp", kind.as_str(), seed + i as u64));
            io::save(&inst, &path).unwrap();
            path
        })
        .collect()
}

pub fn seed() -> String {
    seed_code().to_string()
}

/// The seed operators with `body` injected at the start of the selection.
pub fn seed_with_select_prefix(body: &str) -> String {
    let marker = "std::vector<int> select_by_llm_1(const Solution& sol) {";
    let code = seed();
    assert!(code.contains(marker));
    code.replace(marker, &format!("{marker}\n    {body}"))
}
