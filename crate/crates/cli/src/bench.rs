use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use vrpagent_core::batch::{map_indexed, with_jobs};
use vrpagent_core::io::{self as instance_io, sha256_hex};
use vrpagent_core::splits::SplitManifest;
use vrpagent_core::{Instance, LnsConfig, ProblemKind, RunStats};

use crate::config::{echo, fresh_output_dir, write_json};
use crate::solve::{run_pair, PairSpec};
use crate::{config_error, LnsFlags, OrConfig, ProblemArg};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Instance files or split manifests (*.json).
    #[arg(required = true)]
    pub instances: Vec<PathBuf>,
    #[command(flatten)]
    pub lns: LnsFlags,
    /// Operator pair `remove+order`; repeatable. The first pair is the
    /// baseline of the gap column.
    #[arg(long = "pair")]
    pub pairs: Vec<String>,
    /// C++ candidate to include; repeatable.
    #[arg(long = "candidate")]
    pub candidates: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub repetitions: u64,
    /// Parallel runs across instances (built-in operators only).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemArg>,
}

/// `(mean_a - mean_b) / mean_b`, in percent.
pub fn gap_percent(mean_a: f64, mean_b: f64) -> f64 {
    (mean_a - mean_b) / mean_b * 100.0
}

#[derive(Debug, Clone, Serialize)]
struct Row {
    instance: String,
    pair_index: usize,
    pair: String,
    rep: u64,
    seed: u64,
    objective: f64,
    initial_objective: f64,
    iterations: u64,
    elapsed_s: f64,
    iterations_per_s: f64,
}

fn collect_instances(inputs: &[PathBuf]) -> Result<Vec<(String, Instance)>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.extension().is_some_and(|e| e == "json") {
            let manifest = SplitManifest::load(input).or_config()?;
            let dir = input.parent().unwrap_or(Path::new("."));
            let instances = manifest.load_instances(dir).or_config()?;
            for (entry, inst) in manifest.entries.iter().zip(instances) {
                out.push((stem(Path::new(&entry.path)), inst));
            }
        } else {
            out.push((stem(input), instance_io::load(input).or_config()?));
        }
    }
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn run(args: BenchArgs) -> Result<()> {
    let cfg = args.lns.resolve()?;
    if args.repetitions == 0 {
        return Err(config_error("--repetitions must be positive"));
    }
    let instances = collect_instances(&args.instances)?;
    let kind = instances[0].1.kind();
    if let Some((id, inst)) = instances.iter().find(|(_, i)| i.kind() != kind) {
        return Err(config_error(format!("mixed instance kinds: {id} is {}, expected {kind}", inst.kind())));
    }
    if let Some(p) = args.problem {
        if ProblemKind::from(p) != kind {
            return Err(config_error(format!("instances are {kind}, --problem says {}", ProblemKind::from(p))));
        }
    }

    let mut pairs = Vec::new();
    for label in &args.pairs {
        let (remove, order) = label
            .split_once('+')
            .ok_or_else(|| config_error(format!("pair `{label}` is not of the form remove+order")))?;
        pairs.push(PairSpec::resolve(remove, order, None, &cfg.cache_dir)?);
    }
    for path in &args.candidates {
        pairs.push(PairSpec::resolve("", "", Some(path), &cfg.cache_dir)?);
    }
    if pairs.is_empty() {
        pairs.push(PairSpec::resolve(&cfg.operators.remove, &cfg.operators.order, None, &cfg.cache_dir)?);
    }

    let mut fingerprint = format!("{}|{}", cfg.digest(), args.repetitions);
    for (id, inst) in &instances {
        fingerprint.push_str(&format!("|{id}:{}", instance_io::checksum_of(inst)));
    }
    for p in &pairs {
        fingerprint.push_str(&format!("|{}", p.fingerprint()));
    }
    let out = fresh_output_dir(&args.lns.out, "bench", &sha256_hex(fingerprint.as_bytes()))?;
    echo(&out, &cfg)?;
    if cfg.lns.record_trace {
        fs::create_dir(out.join("traces"))?;
    }

    let tasks: Vec<(usize, u64)> = (0..instances.len()).flat_map(|i| (0..args.repetitions).map(move |r| (i, r))).collect();
    let mut rows = Vec::new();
    for (pair_index, pair) in pairs.iter().enumerate() {
        let one = |&(i, rep): &(usize, u64)| -> Result<(Row, RunStats)> {
            let (id, inst) = &instances[i];
            let config = LnsConfig {
                seed: cfg.lns.seed.wrapping_add(rep),
                ..cfg.lns.clone()
            };
            let (best, stats) = run_pair(inst, pair, &config).with_context(|| format!("{} on {id}", pair.label()))?;
            let row = Row {
                instance: id.clone(),
                pair_index,
                pair: pair.label(),
                rep,
                seed: config.seed,
                objective: best.objective(),
                initial_objective: stats.initial_objective,
                iterations: stats.iterations,
                elapsed_s: stats.elapsed,
                iterations_per_s: stats.iterations_per_second(),
            };
            Ok((row, stats))
        };
        // Candidates share process-global state in their shim and run one at a time.
        let results: Vec<Result<(Row, RunStats)>> = if pair.is_candidate() {
            tasks.iter().map(one).collect()
        } else {
            with_jobs(args.jobs, || map_indexed(&tasks, |_, t| one(t)))
        };
        for r in results {
            let (row, stats) = r?;
            if cfg.lns.record_trace {
                let path = out.join("traces").join(format!("{}__p{}_{}__r{}.jsonl", row.instance, row.pair_index, sanitize(&row.pair), row.rep));
                stats.write_trace(BufWriter::new(File::create(&path)?))?;
            }
            rows.push(row);
        }
    }

    let mut csv = csv::Writer::from_path(out.join("results.csv"))?;
    for row in &rows {
        csv.serialize(row)?;
    }
    csv.flush()?;

    let summary: Vec<serde_json::Value> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mine: Vec<&Row> = rows.iter().filter(|r| r.pair_index == i).collect();
            let n = mine.len() as f64;
            serde_json::json!({
                "pair": p.label(),
                "runs": mine.len(),
                "mean_objective": mine.iter().map(|r| r.objective).sum::<f64>() / n,
                "mean_iterations_per_s": mine.iter().map(|r| r.iterations_per_s).sum::<f64>() / n,
                "total_iterations": mine.iter().map(|r| r.iterations).sum::<u64>(),
            })
        })
        .collect();
    let means: Vec<f64> = summary.iter().map(|s| s["mean_objective"].as_f64().unwrap_or(f64::NAN)).collect();
    let mut gaps = Vec::new();
    for (a, pa) in pairs.iter().enumerate() {
        for (b, pb) in pairs.iter().enumerate() {
            if a != b {
                gaps.push(serde_json::json!({ "a": pa.label(), "b": pb.label(), "gap_percent": gap_percent(means[a], means[b]) }));
            }
        }
    }
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "kind": kind, "instances": instances.len(), "repetitions": args.repetitions, "pairs": summary, "gaps": gaps }),
    )?;

    println!("{:<28} {:>14} {:>10} {:>12}", "pair", "mean_obj", "gap", "iters/s");
    for (i, s) in summary.iter().enumerate() {
        println!(
            "{:<28} {:>14.6} {:>9.2}% {:>12.0}",
            pairs[i].label(),
            means[i],
            gap_percent(means[i], means[0]),
            s["mean_iterations_per_s"].as_f64().unwrap_or(0.0)
        );
    }
    println!("output {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_formula() {
        let g = gap_percent(36.60, 36.65);
        assert!((g - (-0.136425648)).abs() < 1e-6, "{g}");
        assert_eq!(format!("{g:.2}"), "-0.14");
        assert_eq!(format!("{:.3}", gap_percent(36.6, 36.6)), "0.000");
    }
}
