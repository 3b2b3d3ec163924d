use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vrpagent_core::splits::SplitManifest;
use vrpagent_core::{io, Instance, Node, ProblemKind};

fn vrpagent(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrpagent"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("VRPAGENT_LLM_ENDPOINT")
        .env_remove("VRPAGENT_LLM_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// The path after `output ` on stdout.
fn output_dir(dir: &Path, o: &Output) -> PathBuf {
    assert!(o.status.success(), "stdout: {}\nstderr: {}", stdout(o), String::from_utf8_lossy(&o.stderr));
    let line = stdout(o).lines().find_map(|l| l.strip_prefix("output ").map(str::to_string)).expect("output line");
    dir.join(line)
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn single_customer_is_an_out_and_back_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = Instance::new(ProblemKind::Cvrp, 10, vec![Node::depot(0.0, 0.0), Node::customer(0.3, 0.4, 3)]).unwrap();
    io::save(&inst, dir.path().join("one.vrp")).unwrap();
    let o = vrpagent(dir.path(), &["solve", "one.vrp", "--iterations", "50"]);
    let out = output_dir(dir.path(), &o);
    let sol = json(out.join("solution.json"));
    assert_eq!(sol["objective"].as_f64().unwrap(), 2.0 * 0.5);
    assert_eq!(sol["tours"], serde_json::json!([[1]]));
    assert!(stdout(&o).contains("objective 1.000000"));
}

#[test]
fn seeded_iteration_runs_are_identical_and_never_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    assert!(vrpagent(dir.path(), &["gen", "--problem", "vrptw", "--n", "40", "--count", "1", "--seed", "3", "--out", "inst"]).status.success());
    let args = ["solve", "inst/train/vrptw_0000.vrp", "--iterations", "2000", "--seed", "9", "--trace"];
    let a = output_dir(dir.path(), &vrpagent(dir.path(), &args));
    let b = output_dir(dir.path(), &vrpagent(dir.path(), &args));
    assert_ne!(a, b);
    assert_eq!(fs::read(a.join("solution.json")).unwrap(), fs::read(b.join("solution.json")).unwrap());
    assert!(a.join("trace.jsonl").exists());
    assert!(a.join("stats.json").exists());

    // The echoed config alone reproduces the run.
    let echo = a.join("vrpagent.json");
    let c = output_dir(
        dir.path(),
        &vrpagent(dir.path(), &["solve", "inst/train/vrptw_0000.vrp", "--config", echo.to_str().unwrap()]),
    );
    assert_eq!(fs::read(a.join("solution.json")).unwrap(), fs::read(c.join("solution.json")).unwrap());
    assert_eq!(json(a.join("vrpagent.json")), json(c.join("vrpagent.json")));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = Instance::new(ProblemKind::Cvrp, 10, vec![Node::depot(0.0, 0.0), Node::customer(1.0, 0.0, 1)]).unwrap();
    io::save(&inst, dir.path().join("a.vrp")).unwrap();

    fs::write(dir.path().join("bad.json"), r#"{"lns": {"time_limt": 3}}"#).unwrap();
    let o = vrpagent(dir.path(), &["solve", "a.vrp", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("time_limt"));

    assert_eq!(vrpagent(dir.path(), &["solve", "a.vrp", "--remove", "magic"]).status.code(), Some(2));
    assert_eq!(vrpagent(dir.path(), &["solve", "missing.vrp"]).status.code(), Some(2));
    assert_eq!(vrpagent(dir.path(), &["solve", "a.vrp", "--problem", "pcvrp"]).status.code(), Some(2));
    assert_eq!(vrpagent(dir.path(), &["solve", "a.vrp", "--time-limit", "-1"]).status.code(), Some(2));
    assert_eq!(vrpagent(dir.path(), &["solve", "a.vrp", "--bogus-flag"]).status.code(), Some(2));
}

#[test]
fn unreachable_time_window_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut late = Node::customer(3.0, 4.0, 1);
    late.tw_start = 0.0;
    late.tw_end = 1.0;
    let inst = Instance::new(ProblemKind::Vrptw, 10, vec![Node::depot(0.0, 0.0), Node::customer(0.1, 0.0, 1), late]).unwrap();
    io::save(&inst, dir.path().join("tw.vrp")).unwrap();
    let o = vrpagent(dir.path(), &["solve", "tw.vrp", "--iterations", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("customer 2"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_yields_the_requested_set_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["gen", "--n", "500", "--count", "64", "--validation", "4", "--seed", "5", "--out", out];
    assert!(vrpagent(dir.path(), &args("a")).status.success());
    assert!(vrpagent(dir.path(), &args("b")).status.success());
    assert_eq!(fs::read_dir(dir.path().join("a/train")).unwrap().count(), 64);
    let m = SplitManifest::load(dir.path().join("a/train.manifest.json")).unwrap();
    assert_eq!(m.entries.len(), 64);
    let instances = m.load_instances(&dir.path().join("a")).unwrap();
    assert!(instances.iter().all(|i| i.num_nodes() == 501 && i.demand(0) == 0));
    for name in ["train.manifest.json", "validation.manifest.json", "train/cvrp_0063.vrp"] {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap());
    }
    let v = SplitManifest::load(dir.path().join("a/validation.manifest.json")).unwrap();
    assert!(v.entries.iter().all(|e| m.entries.iter().all(|t| t.seed != e.seed)));

    let again = vrpagent(dir.path(), &args("a"));
    assert_eq!(again.status.code(), Some(2), "existing output is never overwritten");
}

#[test]
fn bench_self_gap_is_zero_and_rows_scale_with_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    assert!(vrpagent(dir.path(), &["gen", "--n", "30", "--count", "3", "--out", "inst"]).status.success());
    let o = vrpagent(
        dir.path(),
        &[
            "bench", "inst/train.manifest.json", "--iterations", "300", "--repetitions", "2", "--pair", "seed_random+random",
            "--pair", "seed_random+random", "--trace", "--jobs", "2",
        ],
    );
    let out = output_dir(dir.path(), &o);
    let rows = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 3);
    let summary = json(out.join("summary.json"));
    for g in summary["gaps"].as_array().unwrap() {
        assert_eq!(g["gap_percent"].as_f64().unwrap(), 0.0);
    }
    assert!(stdout(&o).contains("0.00%"));
    assert_eq!(fs::read_dir(out.join("traces")).unwrap().count(), 12);
}

#[test]
fn bench_rejects_mixed_kinds() {
    let dir = tempfile::tempdir().unwrap();
    assert!(vrpagent(dir.path(), &["gen", "--n", "10", "--count", "1", "--out", "c"]).status.success());
    assert!(vrpagent(dir.path(), &["gen", "--problem", "pcvrp", "--n", "10", "--count", "1", "--out", "p"]).status.success());
    let o = vrpagent(dir.path(), &["bench", "c/train/cvrp_0000.vrp", "p/train/pcvrp_0000.vrp", "--iterations", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

fn discovery_config(dir: &Path, provider: &str) -> PathBuf {
    assert!(vrpagent(dir, &["gen", "--n", "25", "--count", "2", "--validation", "1", "--seed", "8", "--out", "inst"]).status.success());
    let cfg = serde_json::json!({
        "train_manifest": "inst/train.manifest.json",
        "validation_manifest": "inst/validation.manifest.json",
        "cache_dir": "cache",
        "discovery": {
            "n_init": 5, "n_elite": 2, "n_offspring": 3, "iterations": 2,
            "iteration_limit": 200, "per_instance_time": 2.0, "master_seed": 4,
            "llm": { "provider": provider }
        }
    });
    let path = dir.join("discover.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn mock_discovery_completes_and_resumes_identically() {
    let dir = tempfile::tempdir().unwrap();
    discovery_config(dir.path(), "mock");
    let full = output_dir(dir.path(), &vrpagent(dir.path(), &["discover", "--config", "discover.json"]));
    let report = json(full.join("report.json"));
    let history = report["history"].as_array().unwrap();
    assert_eq!(history.len(), 3);
    for w in history.windows(2) {
        assert!(w[1]["best_fitness"].as_f64() <= w[0]["best_fitness"].as_f64());
    }
    assert!(report["cost_ledger"]["calls"].as_u64().unwrap() > 0);
    assert!(report["cost_ledger"]["total_cost_usd"].is_number());
    let best = fs::read_to_string(full.join("best.cpp")).unwrap();
    assert!(best.contains("select_by_llm_1"));

    let stopped = output_dir(
        dir.path(),
        &vrpagent(dir.path(), &["discover", "--config", "discover.json", "--stop-after", "1"]),
    );
    assert!(!stopped.join("report.json").exists());
    let resumed = output_dir(dir.path(), &vrpagent(dir.path(), &["discover", "--resume", stopped.to_str().unwrap()]));
    assert_eq!(resumed, stopped);
    assert_eq!(
        fs::read(full.join("individuals.jsonl")).unwrap(),
        fs::read(stopped.join("individuals.jsonl")).unwrap()
    );
    assert_eq!(fs::read(full.join("best.cpp")).unwrap(), fs::read(stopped.join("best.cpp")).unwrap());
}

#[test]
fn http_provider_without_credentials_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    discovery_config(dir.path(), "http");
    let start = std::time::Instant::now();
    let o = vrpagent(dir.path(), &["discover", "--config", "discover.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("VRPAGENT_LLM_ENDPOINT"));
    assert!(start.elapsed().as_secs() < 5);
}
