use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use vrpagent_core::splits::{default_splits, make_splits};

use crate::config::{echo, RunConfig};
use crate::{config_error, OrConfig, ProblemArg};

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemArg>,
    /// Customers per instance.
    #[arg(long)]
    pub n: Option<usize>,
    /// Training instances.
    #[arg(long)]
    pub count: Option<u64>,
    /// Validation instances, seeded from a disjoint range.
    #[arg(long)]
    pub validation: Option<u64>,
    /// Base seed of the splits.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub capacity: Option<u32>,
    /// Output directory; must not exist yet or be empty.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).or_config()?,
        None => RunConfig::default(),
    };
    let g = &mut cfg.gen;
    if let Some(p) = args.problem {
        g.params.kind = p.into();
    }
    if let Some(n) = args.n {
        g.params.n = n;
    }
    if let Some(c) = args.count {
        g.count = c;
    }
    if let Some(v) = args.validation {
        g.validation_count = v;
    }
    if let Some(s) = args.seed {
        g.params.seed = s;
    }
    if let Some(c) = args.capacity {
        g.params.capacity = c;
    }
    g.params.check().or_config()?;
    if g.count == 0 {
        return Err(config_error("--count must be positive"));
    }

    if args.out.exists() && fs::read_dir(&args.out)?.next().is_some() {
        return Err(config_error(format!("{} exists and is not empty", args.out.display())));
    }
    fs::create_dir_all(&args.out)?;
    let mut specs = default_splits(g.count, g.validation_count);
    specs.retain(|s| s.count > 0);
    let manifests = make_splits(&args.out, &g.params, g.params.seed, &specs)?;
    echo(&args.out, &cfg)?;
    for m in &manifests {
        println!("{}: {} instances -> {}", m.split, m.entries.len(), args.out.join(format!("{}.manifest.json", m.split)).display());
    }
    Ok(())
}
