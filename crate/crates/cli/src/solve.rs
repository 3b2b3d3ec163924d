use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use vrpagent_core::io::{self as instance_io, sha256_hex};
use vrpagent_core::{run as run_lns, validate, Instance, LnsConfig, LnsError, OperatorPair, ProblemKind, Solution};
use vrpagent_discovery::{ffi, Artifact, Compiler};

use crate::config::{echo, fresh_output_dir, write_json};
use crate::{config_error, LnsFlags, OrConfig, ProblemArg};

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance file.
    pub instance: PathBuf,
    #[command(flatten)]
    pub lns: LnsFlags,
    /// Expected problem kind; must match the instance.
    #[arg(long, value_enum)]
    pub problem: Option<ProblemArg>,
    /// Use the operators of a C++ candidate instead of built-ins.
    #[arg(long, conflicts_with_all = ["remove", "order"])]
    pub candidate: Option<PathBuf>,
}

/// Where a run's operators come from.
#[derive(Debug, Clone)]
pub enum PairSpec {
    Builtin { remove: String, order: String },
    Candidate { path: PathBuf, artifact: Artifact },
}

impl PairSpec {
    /// Resolves labels, compiling a candidate if given.
    pub fn resolve(remove: &str, order: &str, candidate: Option<&Path>, cache_dir: &Path) -> Result<Self> {
        match candidate {
            None => {
                OperatorPair::builtin(remove, order).or_config()?;
                Ok(PairSpec::Builtin {
                    remove: remove.into(),
                    order: order.into(),
                })
            }
            Some(path) => {
                let source = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).or_config()?;
                let artifact = Compiler::new(cache_dir)
                    .build(&source)
                    .with_context(|| format!("building {}", path.display()))
                    .or_config()?;
                Ok(PairSpec::Candidate {
                    path: path.to_path_buf(),
                    artifact,
                })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            PairSpec::Builtin { remove, order } => format!("{remove}+{order}"),
            PairSpec::Candidate { path, .. } => format!("cpp:{}", path.file_stem().unwrap_or_default().to_string_lossy()),
        }
    }

    /// Identity for output digests: labels or the artifact digest.
    pub fn fingerprint(&self) -> String {
        match self {
            PairSpec::Builtin { .. } => self.label(),
            PairSpec::Candidate { artifact, .. } => format!("cpp:{}", artifact.digest),
        }
    }

    pub fn is_candidate(&self) -> bool {
        matches!(self, PairSpec::Candidate { .. })
    }

    pub fn build(&self, instance: &Instance, seed: u64) -> Result<OperatorPair> {
        match self {
            PairSpec::Builtin { remove, order } => Ok(OperatorPair::builtin(remove, order)?),
            PairSpec::Candidate { artifact, .. } => Ok(ffi::load(&artifact.path, instance, seed)?),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolutionFile<'a> {
    pub instance: String,
    pub kind: ProblemKind,
    pub operators: String,
    pub objective: f64,
    pub travel_cost: f64,
    pub feasible: bool,
    pub tours: Vec<Vec<usize>>,
    pub unassigned: &'a [usize],
}

pub fn solution_file<'a>(instance_id: &str, instance: &Instance, label: &str, best: &'a Solution) -> SolutionFile<'a> {
    SolutionFile {
        instance: instance_id.to_string(),
        kind: instance.kind(),
        operators: label.to_string(),
        objective: best.objective(),
        travel_cost: best.travel_cost(),
        feasible: validate(best, instance).feasible(),
        tours: best.routes(),
        unassigned: best.unassigned(),
    }
}

/// One LNS run with freshly built operators.
pub fn run_pair(
    instance: &Instance,
    pair: &PairSpec,
    config: &LnsConfig,
) -> Result<(Solution, vrpagent_core::RunStats)> {
    let ops = pair.build(instance, config.seed)?;
    match run_lns(instance, &ops, config) {
        Ok(r) => Ok(r),
        Err(LnsError::Instance(e)) => Err(e).context("instance cannot be solved"),
        Err(e) => Err(e.into()),
    }
}

pub fn run(args: SolveArgs) -> Result<()> {
    let cfg = args.lns.resolve()?;
    let instance = instance_io::load(&args.instance).or_config()?;
    if let Some(p) = args.problem {
        let expected: ProblemKind = p.into();
        if expected != instance.kind() {
            return Err(config_error(format!(
                "{} is a {} instance, --problem says {expected}",
                args.instance.display(),
                instance.kind()
            )));
        }
    }
    let pair = PairSpec::resolve(&cfg.operators.remove, &cfg.operators.order, args.candidate.as_deref(), &cfg.cache_dir)?;

    let digest = sha256_hex(format!("{}|{}|{}", cfg.digest(), instance_io::checksum_of(&instance), pair.fingerprint()).as_bytes());
    let out = fresh_output_dir(&args.lns.out, "solve", &digest)?;
    echo(&out, &cfg)?;

    let (best, stats) = run_pair(&instance, &pair, &cfg.lns)?;
    let id = args.instance.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let file = solution_file(&id, &instance, &pair.label(), &best);
    write_json(&out.join("solution.json"), &file)?;
    write_json(
        &out.join("stats.json"),
        &serde_json::json!({
            "iterations": stats.iterations,
            "initial_objective": stats.initial_objective,
            "best_objective": stats.best_objective,
            "accepted": stats.accepted_count,
            "improved": stats.improved_count,
            "rejected_invalid": stats.rejected_invalid,
            "elapsed_s": stats.elapsed,
            "iterations_per_s": stats.iterations_per_second(),
        }),
    )?;
    if cfg.lns.record_trace {
        let path = out.join("trace.jsonl");
        stats
            .write_trace(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if !file.feasible {
        anyhow::bail!("best solution failed validation; see {}", out.display());
    }
    println!("objective {:.6}", best.objective());
    println!("iterations {}", stats.iterations);
    println!("output {}", out.display());
    Ok(())
}
