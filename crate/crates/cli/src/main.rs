mod bench;
mod config;
mod discover;
mod gen;
mod solve;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vrpagent_core::ProblemKind;
use vrpagent_discovery::ga::ProviderKind;

use crate::config::RunConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Bad input from the user: flags, config files, instance files,
/// credentials. Exits with code 2; everything else exits with 3.
#[derive(Debug)]
pub struct ConfigError(anyhow::Error);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub trait OrConfig<T> {
    fn or_config(self) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> OrConfig<T> for Result<T, E> {
    fn or_config(self) -> anyhow::Result<T> {
        self.map_err(|e| anyhow::Error::new(ConfigError(e.into())))
    }
}

pub fn config_error(msg: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(ConfigError(anyhow::anyhow!("{msg}")))
}

#[derive(Debug, Parser)]
#[command(name = "vrpagent", version, about = "LNS vehicle routing with LLM-discovered operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and write the best solution.
    Solve(solve::SolveArgs),
    /// Generate train (and validation) instance sets with manifests.
    Gen(gen::GenArgs),
    /// Compare operator pairs over an instance set.
    Bench(bench::BenchArgs),
    /// Run or resume an operator discovery run.
    Discover(discover::DiscoverArgs),
    /// Evaluation child process (internal).
    #[command(hide = true)]
    Worker {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProblemArg {
    Cvrp,
    Vrptw,
    Pcvrp,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Cvrp => ProblemKind::Cvrp,
            ProblemArg::Vrptw => ProblemKind::Vrptw,
            ProblemArg::Pcvrp => ProblemKind::Pcvrp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProviderArg {
    Mock,
    Http,
}

impl From<ProviderArg> for ProviderKind {
    fn from(p: ProviderArg) -> Self {
        match p {
            ProviderArg::Mock => ProviderKind::Mock,
            ProviderArg::Http => ProviderKind::Http,
        }
    }
}

/// Flags shared by the LNS-running commands.
#[derive(Debug, Clone, Args)]
pub struct LnsFlags {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Wall-clock budget per run, seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Fixed iteration budget per run (reproducible; overrides the time limit).
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Removal operator label: seed_random, string, none.
    #[arg(long)]
    pub remove: Option<String>,
    /// Ordering operator label: random, sisrs, demand_desc, far_first, close_first.
    #[arg(long)]
    pub order: Option<String>,
    /// Record the best-objective trace.
    #[arg(long)]
    pub trace: bool,
    /// Parent directory for the run's output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

impl LnsFlags {
    /// Config file (or defaults) with these flags applied.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).or_config()?,
            None => {
                let mut cfg = RunConfig::default();
                cfg.rebase(&std::env::current_dir()?);
                cfg
            }
        };
        if let Some(t) = self.time_limit {
            cfg.lns.time_limit = t;
        }
        if let Some(i) = self.iterations {
            cfg.lns.iteration_limit = Some(i);
        }
        if let Some(s) = self.seed {
            cfg.lns.seed = s;
        }
        if let Some(r) = &self.remove {
            cfg.operators.remove = r.clone();
        }
        if let Some(o) = &self.order {
            cfg.operators.order = o.clone();
        }
        cfg.lns.record_trace = self.trace || cfg.lns.record_trace && self.config.is_some();
        cfg.lns.check().or_config()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Worker { args } = &cli.command {
        let code = vrpagent_discovery::worker::main_with_args(args);
        return ExitCode::from(u8::try_from(code).unwrap_or(1));
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    let result = match cli.command {
        Command::Solve(a) => solve::run(a),
        Command::Gen(a) => gen::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Discover(a) => discover::run(a),
        Command::Worker { .. } => unreachable!(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let config = e.chain().any(|c| c.is::<ConfigError>());
            eprintln!("error: {e:#}");
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
