use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use log::info;
use vrpagent_discovery::ga::{ga_run, ProviderKind, RunDir, RunOptions};
use vrpagent_discovery::gateway::Admission;
use vrpagent_discovery::{Compiler, Evaluator, Gateway, HttpProvider, MockProvider, WorkerCommand};

use crate::config::{echo, fresh_output_dir, RunConfig, ECHO_FILE};
use crate::{config_error, OrConfig, ProblemArg, ProviderArg};

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    /// JSON run configuration (the `discovery` section drives the run).
    #[arg(long, required_unless_present = "resume")]
    pub config: Option<PathBuf>,
    /// Continue the run in this directory from its latest checkpoint.
    #[arg(long, conflicts_with = "config")]
    pub resume: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemArg>,
    /// GA iterations.
    #[arg(long)]
    pub iterations: Option<u32>,
    /// Wall-clock budget per training instance, seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent evaluation processes.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Parent directory for the run directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Stop after this many iterations (the run stays resumable).
    #[arg(long, hide = true)]
    pub stop_after: Option<u32>,
}

fn apply_flags(cfg: &mut RunConfig, args: &DiscoverArgs) {
    let d = &mut cfg.discovery;
    if let Some(p) = args.provider {
        d.llm.provider = p.into();
    }
    if let Some(p) = args.problem {
        d.problem = p.into();
    }
    if let Some(i) = args.iterations {
        d.iterations = i;
    }
    if let Some(t) = args.time_limit {
        d.per_instance_time = t;
    }
    if let Some(s) = args.seed {
        d.master_seed = s;
    }
    if let Some(j) = args.jobs {
        d.workers = j;
    }
}

fn gateway(cfg: &RunConfig) -> Result<Gateway> {
    let llm = &cfg.discovery.llm;
    let admission = Admission::new(llm.max_in_flight, llm.tokens_per_minute);
    Ok(match llm.provider {
        ProviderKind::Mock => Gateway::new(
            Box::new(MockProvider::corpus(cfg.discovery.master_seed)),
            "mock",
            admission,
            llm.rates,
        ),
        ProviderKind::Http => {
            let provider = HttpProvider::from_env(llm.retry).or_config()?;
            Gateway::new(Box::new(provider), llm.model.clone(), admission, llm.rates)
        }
    })
}

fn evaluator(cfg: &RunConfig) -> Result<Evaluator> {
    let exe = std::env::current_exe().context("locating the vrpagent executable")?;
    let worker = WorkerCommand {
        program: exe,
        prefix: vec!["worker".into()],
    };
    let mut compiler = Compiler::new(&cfg.cache_dir);
    compiler.timeout = std::time::Duration::from_secs_f64(cfg.discovery.build_timeout);
    let mut ev = Evaluator::new(compiler, worker);
    if cfg.discovery.workers > 0 {
        ev.workers = cfg.discovery.workers;
    }
    Ok(ev)
}

fn load_echo(dir: &Path) -> Result<RunConfig> {
    let path = dir.join(ECHO_FILE);
    if !path.exists() {
        return Err(config_error(format!("{} is not a discovery run directory (no {ECHO_FILE})", dir.display())));
    }
    RunConfig::load(&path).or_config()
}

pub fn run(args: DiscoverArgs) -> Result<()> {
    let (cfg, dir, resume) = match &args.resume {
        Some(dir) => {
            let mut cfg = load_echo(dir)?;
            // Only execution settings may change on resume.
            if let Some(j) = args.jobs {
                cfg.discovery.workers = j;
            }
            (cfg, dir.clone(), true)
        }
        None => {
            let path = args.config.as_ref().expect("clap requires --config without --resume");
            let mut cfg = RunConfig::load(path).or_config()?;
            apply_flags(&mut cfg, &args);
            cfg.expand_manifests().or_config()?;
            cfg.discovery.check().or_config()?;
            let dir = fresh_output_dir(&args.out, "discover", &cfg.digest())?;
            echo(&dir, &cfg)?;
            (cfg, dir, false)
        }
    };
    let gw = gateway(&cfg)?;
    let ev = evaluator(&cfg)?;
    info!("run directory {}", dir.display());
    let options = RunOptions {
        resume,
        stop_after: args.stop_after,
    };
    let Some(outcome) = ga_run(&cfg.discovery, &gw, &ev, &RunDir::new(&dir), &options)? else {
        println!("stopped; resume with: vrpagent discover --resume {}", dir.display());
        println!("output {}", dir.display());
        return Ok(());
    };
    let ledger = outcome.ledger.report();
    println!(
        "selected #{} (training fitness {:.6}); source {}",
        outcome.selected.id,
        outcome.selected.fitness.key(),
        RunDir::new(&dir).best_source().display()
    );
    println!("llm cost {}", ledger["total_cost_usd"]);
    println!("output {}", dir.display());
    Ok(())
}
