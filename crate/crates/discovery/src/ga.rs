//! The genetic loop over operator source code: elitism, biased crossover,
//! elite mutation with replace-if-improved, length-penalized fitness.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vrpagent_core::ProblemKind;

use crate::compile::line_count;
use crate::evaluate::{fitness_from_report, instance_seed, EvalError, EvalManifest, EvalStatus, Evaluator, InstanceResult};
use crate::fitness::{eq1, mean, Fitness};
use crate::gateway::{extract_code, ChatRequest, CostLedger, Gateway, Rates, RetryPolicy, Sampling};
use crate::prompts::{CrossoverMode, Message, ProblemContext, PromptError, TemplateId};

pub const CHECKPOINT_FORMAT: &str = "vrpagent-checkpoint 1";

const STREAM_TRAIN: u64 = 0;
const STREAM_VALIDATION: u64 = 1;
const STREAM_GA: u64 = 2;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("invalid discovery config: {0}")]
    Config(String),
    #[error("only {finite} individuals with finite fitness, need {needed}")]
    TooFewFinite { finite: usize, needed: usize },
    #[error("no finalist survived validation")]
    NoValidFinalist,
    #[error("initial population is empty: every generation attempt failed")]
    EmptyPopulation,
    #[error("evaluator failed (run can be resumed): {0}")]
    Evaluator(#[from] EvalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("run directory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt run directory {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DiscoveryError + '_ {
    move |source| DiscoveryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CreationKind {
    Init,
    Crossover,
    MutationAblation,
    MutationExtend,
    MutationAdjust,
    MutationRefactor,
}

impl CreationKind {
    pub fn from_mutation(id: TemplateId) -> Self {
        match id {
            TemplateId::MutationAblation => CreationKind::MutationAblation,
            TemplateId::MutationExtend => CreationKind::MutationExtend,
            TemplateId::MutationAdjust => CreationKind::MutationAdjust,
            TemplateId::MutationRefactor => CreationKind::MutationRefactor,
            other => panic!("{other} is not a mutation template"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parents: Vec<u64>,
    pub kind: CreationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    /// Iteration that created it, 0 for the initial population.
    pub born: u32,
    pub lineage: Lineage,
    pub source: String,
    pub line_count: usize,
    pub fitness: Fitness,
    pub status: Option<EvalStatus>,
    pub eval_detail: Vec<InstanceResult>,
}

impl Individual {
    pub fn new(id: u64, born: u32, lineage: Lineage, source: String) -> Self {
        Individual {
            id,
            born,
            lineage,
            line_count: line_count(&source),
            source,
            fitness: Fitness::Unevaluated,
            status: None,
            eval_detail: Vec::new(),
        }
    }

    pub fn mean_objective(&self) -> Option<f64> {
        (self.status == Some(EvalStatus::Ok)).then(|| mean(&self.eval_detail.iter().map(|r| r.objective).collect::<Vec<_>>()))
    }

    /// Eq. 1 from the stored detail, for auditing the stored fitness.
    pub fn recomputed_fitness(&self, lambda: f64) -> Option<f64> {
        let objectives: Vec<f64> = self.eval_detail.iter().map(|r| r.objective).collect();
        (self.status == Some(EvalStatus::Ok)).then(|| eq1(&objectives, self.line_count, lambda))
    }
}

/// Ranking order: fitness, then shorter code, then older id.
pub fn rank_cmp(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    a.fitness
        .cmp_key(&b.fitness)
        .then(a.line_count.cmp(&b.line_count))
        .then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmSettings {
    pub provider: ProviderKind,
    pub model: String,
    pub init_temperature: f64,
    pub breed_temperature: f64,
    pub max_output_tokens: u32,
    /// Generation attempts per child before it is dropped.
    pub max_attempts: u32,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub tokens_per_minute: Option<u64>,
    pub rates: Rates,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            provider: ProviderKind::Mock,
            model: "gemini-2.5-flash".into(),
            init_temperature: 1.0,
            breed_temperature: 0.7,
            max_output_tokens: 8192,
            max_attempts: 3,
            retry: RetryPolicy::default(),
            max_in_flight: 8,
            tokens_per_minute: None,
            rates: Rates {
                usd_per_million_input: 0.30,
                usd_per_million_output: 2.50,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoveryConfig {
    pub problem: ProblemKind,
    pub n_init: usize,
    pub n_elite: usize,
    pub n_offspring: usize,
    pub crossover_bias: f64,
    pub crossover_mode: CrossoverMode,
    pub lambda: f64,
    pub iterations: u32,
    pub mutation_enabled: bool,
    pub train_instances: Vec<PathBuf>,
    pub validation_instances: Vec<PathBuf>,
    pub per_instance_time: f64,
    /// Deterministic iteration budget per instance instead of wall clock.
    pub iteration_limit: Option<u64>,
    /// Draw fresh training seeds every iteration instead of fixing them.
    pub vary_seeds: bool,
    pub master_seed: u64,
    /// Concurrent evaluation processes; 0 = one per core.
    pub workers: usize,
    pub memory_limit: u64,
    pub build_timeout: f64,
    /// All-time top individuals added to the final elites for validation.
    pub finalists_top: usize,
    pub llm: LlmSettings,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            problem: ProblemKind::Cvrp,
            n_init: 100,
            n_elite: 10,
            n_offspring: 30,
            crossover_bias: 0.8,
            crossover_mode: CrossoverMode::Biased,
            lambda: 2e-4,
            iterations: 40,
            mutation_enabled: true,
            train_instances: Vec::new(),
            validation_instances: Vec::new(),
            per_instance_time: 20.0,
            iteration_limit: None,
            vary_seeds: false,
            master_seed: 0,
            workers: 0,
            memory_limit: 2 << 30,
            build_timeout: 60.0,
            finalists_top: 10,
            llm: LlmSettings::default(),
        }
    }
}

impl DiscoveryConfig {
    pub fn check(&self) -> Result<(), DiscoveryError> {
        let bad = |m: String| Err(DiscoveryError::Config(m));
        if self.n_elite == 0 || self.n_elite >= self.n_init {
            return bad(format!("need 0 < n_elite < n_init, got {} and {}", self.n_elite, self.n_init));
        }
        if self.n_offspring == 0 {
            return bad("n_offspring must be positive".into());
        }
        if !(self.crossover_bias > 0.5 && self.crossover_bias <= 1.0) {
            return bad(format!("crossover_bias must be in (0.5, 1], got {}", self.crossover_bias));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.train_instances.is_empty() {
            return bad("train_instances is empty".into());
        }
        if let Some(p) = self.validation_instances.iter().find(|p| self.train_instances.contains(p)) {
            return bad(format!("{} is in both training and validation", p.display()));
        }
        if !(self.per_instance_time > 0.0 && self.per_instance_time.is_finite()) {
            return bad("per_instance_time must be positive".into());
        }
        if self.iteration_limit == Some(0) || self.memory_limit == 0 || !(self.build_timeout > 0.0) {
            return bad("limits must be positive".into());
        }
        if self.llm.max_attempts == 0 || self.llm.max_in_flight == 0 {
            return bad("llm.max_attempts and llm.max_in_flight must be positive".into());
        }
        Ok(())
    }

    fn sampling(&self, temperature: f64) -> Sampling {
        Sampling {
            temperature,
            max_output_tokens: self.llm.max_output_tokens,
        }
    }
}

/// Scores individuals on a fixed instance set.
pub struct Scorer<'a> {
    pub evaluator: &'a Evaluator,
    pub instances: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub per_instance_time: f64,
    pub iteration_limit: Option<u64>,
    pub memory_limit: u64,
    pub build_timeout: f64,
    pub lambda: f64,
}

impl<'a> Scorer<'a> {
    pub fn training(config: &DiscoveryConfig, evaluator: &'a Evaluator, iteration: u32) -> Self {
        let stream = if config.vary_seeds { STREAM_TRAIN + 16 * (u64::from(iteration) + 1) } else { STREAM_TRAIN };
        Scorer::new(config, evaluator, &config.train_instances, stream, config.lambda)
    }

    pub fn validation(config: &DiscoveryConfig, evaluator: &'a Evaluator) -> Self {
        Scorer::new(config, evaluator, &config.validation_instances, STREAM_VALIDATION, 0.0)
    }

    fn new(config: &DiscoveryConfig, evaluator: &'a Evaluator, instances: &[PathBuf], stream: u64, lambda: f64) -> Self {
        Scorer {
            evaluator,
            seeds: (0..instances.len() as u64).map(|i| instance_seed(config.master_seed, stream, i)).collect(),
            instances: instances.to_vec(),
            per_instance_time: config.per_instance_time,
            iteration_limit: config.iteration_limit,
            memory_limit: config.memory_limit,
            build_timeout: config.build_timeout,
            lambda,
        }
    }

    pub fn score(&self, individual: &mut Individual) -> Result<(), EvalError> {
        let manifest = EvalManifest {
            instances: self.instances.clone(),
            seeds: self.seeds.clone(),
            per_instance_time: self.per_instance_time,
            iteration_limit: self.iteration_limit,
            source: individual.source.clone(),
            memory_limit: self.memory_limit,
            build_timeout: self.build_timeout,
        };
        let report = self.evaluator.run(&manifest)?;
        individual.fitness = fitness_from_report(&report, individual.line_count, self.lambda);
        individual.status = Some(report.status);
        individual.eval_detail = report.per_instance;
        Ok(())
    }

    pub fn score_all(&self, individuals: &mut [Individual]) -> Result<(), EvalError> {
        for ind in individuals.iter_mut().filter(|i| !i.fitness.is_evaluated()) {
            self.score(ind)?;
        }
        Ok(())
    }
}

/// Splits `population` into the `k` best and the rest.
pub fn top_k_elite(mut population: Vec<Individual>, k: usize) -> Result<(Vec<Individual>, Vec<Individual>), DiscoveryError> {
    let finite = population.iter().filter(|i| i.fitness.is_finite()).count();
    if finite < k {
        return Err(DiscoveryError::TooFewFinite { finite, needed: k });
    }
    population.sort_by(rank_cmp);
    let rest = population.split_off(k);
    Ok((population, rest))
}

pub fn draw_mutation_kind(rng: &mut impl Rng) -> TemplateId {
    TemplateId::MUTATIONS[rng.gen_range(0..TemplateId::MUTATIONS.len())]
}

/// Everything breeding needs besides the parents.
pub struct Breeder<'a> {
    pub gateway: &'a Gateway,
    pub problem: ProblemContext,
    pub config: &'a DiscoveryConfig,
    pub iteration: u32,
}

struct Job {
    messages: Vec<Message>,
    temperature: f64,
    tag: String,
}

impl Breeder<'_> {
    /// Runs every job with up to `max_attempts` tries each; returns the
    /// extracted code per job, `None` where every attempt failed.
    fn generate(&self, jobs: &[Job]) -> Vec<Option<String>> {
        let mut results: Vec<Option<String>> = vec![None; jobs.len()];
        for attempt in 0..self.config.llm.max_attempts {
            let pending: Vec<usize> = (0..jobs.len()).filter(|&i| results[i].is_none()).collect();
            if pending.is_empty() {
                break;
            }
            let requests: Vec<ChatRequest> = pending
                .iter()
                .map(|&i| ChatRequest {
                    messages: jobs[i].messages.clone(),
                    sampling: self.config.sampling(jobs[i].temperature),
                    nonce: format!("{}/attempt{attempt}", jobs[i].tag),
                })
                .collect();
            for (&i, reply) in pending.iter().zip(self.gateway.complete_all(&requests)) {
                match reply.and_then(|ex| extract_code(&ex.response)) {
                    Ok(code) if !code.trim().is_empty() => results[i] = Some(code),
                    Ok(_) => warn!("{}: empty code block (attempt {attempt})", jobs[i].tag),
                    Err(e) => warn!("{}: {e} (attempt {attempt})", jobs[i].tag),
                }
            }
        }
        results
    }

    pub fn initial_population(&self, n: usize, next_id: &mut u64) -> Result<Vec<Individual>, DiscoveryError> {
        let messages = self.problem.seed_prompt()?;
        let jobs: Vec<Job> = (0..n)
            .map(|i| Job {
                messages: messages.clone(),
                temperature: self.config.llm.init_temperature,
                tag: format!("init/{i}"),
            })
            .collect();
        let mut out = Vec::new();
        for (i, code) in self.generate(&jobs).into_iter().enumerate() {
            match code {
                Some(source) => {
                    out.push(Individual::new(*next_id, 0, Lineage { parents: vec![], kind: CreationKind::Init }, source));
                    *next_id += 1;
                }
                None => warn!("initial individual {i} dropped after repeated generation failures"),
            }
        }
        Ok(out)
    }

    /// Crossover children from uniformly drawn (elite, non-elite) pairs.
    pub fn make_offspring(
        &self,
        elites: &[Individual],
        non_elites: &[Individual],
        n_offspring: usize,
        rng: &mut impl Rng,
        next_id: &mut u64,
    ) -> Result<Vec<Individual>, DiscoveryError> {
        if elites.is_empty() || non_elites.is_empty() {
            return Err(DiscoveryError::Config("crossover needs elites and non-elites".into()));
        }
        let pairs: Vec<(usize, usize)> = (0..n_offspring)
            .map(|_| (rng.gen_range(0..elites.len()), rng.gen_range(0..non_elites.len())))
            .collect();
        let jobs = pairs
            .iter()
            .enumerate()
            .map(|(i, &(e, ne))| {
                Ok(Job {
                    messages: self.problem.crossover_prompt(
                        &elites[e].source,
                        &non_elites[ne].source,
                        self.config.crossover_mode,
                        self.config.crossover_bias,
                    )?,
                    temperature: self.config.llm.breed_temperature,
                    tag: format!("it{}/crossover/{i}", self.iteration),
                })
            })
            .collect::<Result<Vec<_>, PromptError>>()?;
        let mut out = Vec::new();
        for (i, code) in self.generate(&jobs).into_iter().enumerate() {
            let (e, ne) = pairs[i];
            match code {
                Some(source) => {
                    let lineage = Lineage {
                        parents: vec![elites[e].id, non_elites[ne].id],
                        kind: CreationKind::Crossover,
                    };
                    out.push(Individual::new(*next_id, self.iteration, lineage, source));
                    *next_id += 1;
                }
                None => warn!("iteration {}: child {i} dropped, brood shrinks", self.iteration),
            }
        }
        Ok(out)
    }

    /// One mutation per elite; the mutant replaces its elite only if its
    /// fitness is strictly lower. Returns the new elites and every mutant
    /// that was evaluated.
    pub fn mutate_elites(
        &self,
        elites: Vec<Individual>,
        rng: &mut impl Rng,
        next_id: &mut u64,
        score: &mut dyn FnMut(&mut Individual) -> Result<(), EvalError>,
    ) -> Result<(Vec<Individual>, Vec<Individual>), DiscoveryError> {
        if !self.config.mutation_enabled {
            return Ok((elites, Vec::new()));
        }
        let kinds: Vec<TemplateId> = elites.iter().map(|_| draw_mutation_kind(rng)).collect();
        let jobs = elites
            .iter()
            .zip(&kinds)
            .enumerate()
            .map(|(i, (elite, &kind))| {
                Ok(Job {
                    messages: self.problem.mutation_prompt(kind, &elite.source)?,
                    temperature: self.config.llm.breed_temperature,
                    tag: format!("it{}/mutation/{i}", self.iteration),
                })
            })
            .collect::<Result<Vec<_>, PromptError>>()?;
        let codes = self.generate(&jobs);
        let mut survivors = Vec::with_capacity(elites.len());
        let mut mutants = Vec::new();
        for ((elite, kind), code) in elites.into_iter().zip(kinds).zip(codes) {
            let Some(source) = code else {
                warn!("iteration {}: mutation of {} failed to generate, elite kept", self.iteration, elite.id);
                survivors.push(elite);
                continue;
            };
            let lineage = Lineage {
                parents: vec![elite.id],
                kind: CreationKind::from_mutation(kind),
            };
            let mut mutant = Individual::new(*next_id, self.iteration, lineage, source);
            *next_id += 1;
            score(&mut mutant)?;
            if mutant.fitness.key() < elite.fitness.key() {
                survivors.push(mutant.clone());
            } else {
                survivors.push(elite);
            }
            mutants.push(mutant);
        }
        Ok((survivors, mutants))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: u32,
    pub population_size: usize,
    pub elite_min: f64,
    pub best_id: u64,
    pub best_fitness: f64,
    pub disqualified: usize,
}

/// State persisted after the initial population (iteration 0) and after
/// every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub iteration: u32,
    pub next_id: u64,
    /// Lines of the individual archive written so far.
    pub archive_len: u64,
    pub population: Vec<Individual>,
    pub best: Individual,
    pub history: Vec<IterationSummary>,
    pub ledger: CostLedger,
}

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn archive(&self) -> PathBuf {
        self.root.join("individuals.jsonl")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints.jsonl")
    }
    pub fn ledger(&self) -> PathBuf {
        self.root.join("cost_ledger.json")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
    pub fn best_source(&self) -> PathBuf {
        self.root.join("best.cpp")
    }

    /// Last complete checkpoint; a torn final line from a kill is ignored.
    pub fn last_checkpoint(&self) -> Result<Option<Checkpoint>, DiscoveryError> {
        let path = self.checkpoints();
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path)(e)),
        };
        let mut last = None;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io_err(&path))?;
            if let Ok(cp) = serde_json::from_str::<Checkpoint>(&line) {
                if cp.format != CHECKPOINT_FORMAT {
                    return Err(DiscoveryError::Corrupt {
                        path,
                        reason: format!("checkpoint format `{}`", cp.format),
                    });
                }
                last = Some(cp);
            }
        }
        Ok(last)
    }

    pub fn read_archive(&self) -> Result<Vec<Individual>, DiscoveryError> {
        let path = self.archive();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&path)(e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| DiscoveryError::Corrupt {
                    path: path.clone(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }
}

struct Archive {
    path: PathBuf,
    file: File,
    len: u64,
}

impl Archive {
    fn open(path: &Path, keep: u64) -> Result<Self, DiscoveryError> {
        let mut kept = String::new();
        if keep > 0 {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let lines: Vec<&str> = text.lines().collect();
            if (lines.len() as u64) < keep {
                return Err(DiscoveryError::Corrupt {
                    path: path.to_path_buf(),
                    reason: format!("archive has {} records, checkpoint expects {keep}", lines.len()),
                });
            }
            for l in &lines[..keep as usize] {
                kept.push_str(l);
                kept.push('\n');
            }
        }
        fs::write(path, kept).map_err(io_err(path))?;
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok(Archive {
            path: path.to_path_buf(),
            file,
            len: keep,
        })
    }

    fn append(&mut self, individuals: &[Individual]) -> Result<(), DiscoveryError> {
        for ind in individuals {
            let line = serde_json::to_string(ind).expect("individual serializes");
            writeln!(self.file, "{line}").map_err(io_err(&self.path))?;
            self.len += 1;
        }
        self.file.flush().map_err(io_err(&self.path))
    }
}

fn append_line(path: &Path, value: &impl Serialize) -> Result<(), DiscoveryError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let line = serde_json::to_string(value).expect("serializable");
    writeln!(f, "{line}").and_then(|_| f.sync_data()).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), DiscoveryError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_string_pretty(value).expect("serializable"))
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub id: u64,
    pub mean_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    /// Lowest training fitness ever seen.
    pub best_training: Individual,
    /// Chosen on the validation set; equals `best_training` when no
    /// validation instances are configured.
    pub selected: Individual,
    pub validation: Vec<ValidationScore>,
    pub history: Vec<IterationSummary>,
    pub ledger: CostLedger,
}

fn summarize(iteration: u32, population: &[Individual], best: &Individual) -> IterationSummary {
    IterationSummary {
        iteration,
        population_size: population.len(),
        elite_min: population.iter().map(|i| i.fitness.key()).fold(f64::INFINITY, f64::min),
        best_id: best.id,
        best_fitness: best.fitness.key(),
        disqualified: population.iter().filter(|i| !i.fitness.is_finite()).count(),
    }
}

fn improve_best(best: &mut Option<Individual>, candidates: &[Individual]) {
    for c in candidates.iter().filter(|c| c.fitness.is_finite()) {
        if best.as_ref().is_none_or(|b| rank_cmp(c, b).is_lt()) {
            *best = Some(c.clone());
        }
    }
}

/// Options that affect control flow but not results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue from the last checkpoint in the run directory.
    pub resume: bool,
    /// Stop (as if killed) after this many completed iterations.
    pub stop_after: Option<u32>,
}

/// Runs the full discovery loop, persisting state into `dir`.
pub fn ga_run(
    config: &DiscoveryConfig,
    gateway: &Gateway,
    evaluator: &Evaluator,
    dir: &RunDir,
    options: &RunOptions,
) -> Result<Option<GaOutcome>, DiscoveryError> {
    config.check()?;
    fs::create_dir_all(&dir.root).map_err(io_err(&dir.root))?;
    let breeder = |iteration| Breeder {
        gateway,
        problem: ProblemContext::new(config.problem),
        config,
        iteration,
    };

    let resumed = if options.resume { dir.last_checkpoint()? } else { None };
    let (mut population, mut next_id, mut best, mut history, start, mut archive) = match resumed {
        Some(cp) => {
            info!("resuming after iteration {}", cp.iteration);
            gateway.restore_ledger(cp.ledger.clone());
            let archive = Archive::open(&dir.archive(), cp.archive_len)?;
            (cp.population, cp.next_id, Some(cp.best), cp.history, cp.iteration + 1, archive)
        }
        None => {
            write_json(&dir.config(), config)?;
            let _ = fs::remove_file(dir.checkpoints());
            let mut archive = Archive::open(&dir.archive(), 0)?;
            let mut next_id = 0;
            let mut population = breeder(0).initial_population(config.n_init, &mut next_id)?;
            if population.is_empty() {
                return Err(DiscoveryError::EmptyPopulation);
            }
            Scorer::training(config, evaluator, 0).score_all(&mut population)?;
            archive.append(&population)?;
            let mut best = None;
            improve_best(&mut best, &population);
            let best_ind = best.clone().ok_or(DiscoveryError::TooFewFinite {
                finite: 0,
                needed: config.n_elite,
            })?;
            let history = vec![summarize(0, &population, &best_ind)];
            info!("initial population: {} individuals, best fitness {:.6}", population.len(), best_ind.fitness.key());
            let cp = Checkpoint {
                format: CHECKPOINT_FORMAT.into(),
                iteration: 0,
                next_id,
                archive_len: archive.len,
                population: population.clone(),
                best: best_ind,
                history: history.clone(),
                ledger: gateway.ledger(),
            };
            append_line(&dir.checkpoints(), &cp)?;
            write_json(&dir.ledger(), &gateway.ledger().report())?;
            (population, next_id, best, history, 1, archive)
        }
    };

    for iteration in start..=config.iterations {
        if options.stop_after.is_some_and(|s| iteration > s) {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(config.master_seed, STREAM_GA, u64::from(iteration)));
        let scorer = Scorer::training(config, evaluator, iteration);
        if config.vary_seeds {
            scorer.score_all(&mut population)?;
        }
        let (elites, non_elites) = top_k_elite(population, config.n_elite)?;
        let b = breeder(iteration);
        let mut offspring = b.make_offspring(&elites, &non_elites, config.n_offspring, &mut rng, &mut next_id)?;
        scorer.score_all(&mut offspring)?;
        let (elites, mutants) = b.mutate_elites(elites, &mut rng, &mut next_id, &mut |ind| scorer.score(ind))?;

        archive.append(&offspring)?;
        archive.append(&mutants)?;
        improve_best(&mut best, &offspring);
        improve_best(&mut best, &mutants);

        population = elites;
        population.extend(offspring);
        let best_ind = best.clone().expect("best exists after init");
        let summary = summarize(iteration, &population, &best_ind);
        info!(
            "iteration {iteration}: population {}, elite min {:.6}, best {:.6} (#{})",
            summary.population_size, summary.elite_min, summary.best_fitness, summary.best_id
        );
        history.push(summary);
        let cp = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            iteration,
            next_id,
            archive_len: archive.len,
            population: population.clone(),
            best: best_ind,
            history: history.clone(),
            ledger: gateway.ledger(),
        };
        append_line(&dir.checkpoints(), &cp)?;
        write_json(&dir.ledger(), &gateway.ledger().report())?;
    }

    let best_training = best.expect("best exists after init");
    let (selected, validation) = if config.validation_instances.is_empty() {
        (best_training.clone(), Vec::new())
    } else {
        let finalists = finalists(&population, &dir.read_archive()?, config);
        select_best_by_validation(&finalists, &Scorer::validation(config, evaluator))?
    };
    let outcome = GaOutcome {
        best_training,
        selected,
        validation,
        history,
        ledger: gateway.ledger(),
    };
    fs::write(dir.best_source(), &outcome.selected.source).map_err(io_err(&dir.best_source()))?;
    write_json(&dir.ledger(), &outcome.ledger.report())?;
    write_json(
        &dir.report(),
        &serde_json::json!({
            "selected_id": outcome.selected.id,
            "selected_source": dir.best_source(),
            "selected_training_fitness": outcome.selected.fitness.key(),
            "best_training_id": outcome.best_training.id,
            "best_training_fitness": outcome.best_training.fitness.key(),
            "validation": outcome.validation,
            "history": outcome.history,
            "cost_ledger": outcome.ledger.report(),
        }),
    )?;
    Ok(Some(outcome))
}

/// Last elites plus the all-time top by training fitness, deduplicated.
pub fn finalists(population: &[Individual], archive: &[Individual], config: &DiscoveryConfig) -> Vec<Individual> {
    let mut last = population.to_vec();
    last.sort_by(rank_cmp);
    let mut out: Vec<Individual> = last.into_iter().take(config.n_elite).filter(|i| i.fitness.is_finite()).collect();
    let mut all: Vec<&Individual> = archive.iter().filter(|i| i.fitness.is_finite()).collect();
    all.sort_by(|a, b| rank_cmp(a, b));
    for ind in all.into_iter().take(config.finalists_top) {
        if !out.iter().any(|o| o.id == ind.id) {
            out.push(ind.clone());
        }
    }
    out
}

/// Re-evaluates `candidates` with `scorer` (λ = 0) and returns the one with
/// the lowest mean validation objective; ties go to the better-ranked
/// training individual.
pub fn select_best_by_validation(
    candidates: &[Individual],
    scorer: &Scorer,
) -> Result<(Individual, Vec<ValidationScore>), DiscoveryError> {
    let mut ranked = candidates.to_vec();
    ranked.sort_by(rank_cmp);
    let mut scores = Vec::with_capacity(ranked.len());
    let mut chosen: Option<(f64, &Individual)> = None;
    for cand in &ranked {
        let mut probe = cand.clone();
        probe.fitness = Fitness::Unevaluated;
        scorer.score(&mut probe)?;
        let value = probe.fitness.value().filter(|v| v.is_finite());
        scores.push(ValidationScore {
            id: cand.id,
            mean_objective: value,
        });
        if let Some(v) = value {
            if chosen.is_none_or(|(best, _)| v < best) {
                chosen = Some((v, cand));
            }
        }
    }
    let (_, best) = chosen.ok_or(DiscoveryError::NoValidFinalist)?;
    Ok((best.clone(), scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(id: u64, fitness: Fitness, lines: usize) -> Individual {
        Individual {
            fitness,
            line_count: lines,
            ..Individual::new(id, 0, Lineage { parents: vec![], kind: CreationKind::Init }, String::new())
        }
    }

    #[test]
    fn top_k_orders_by_fitness_then_length_then_id() {
        let pop = vec![
            ind(0, Fitness::Value(3.0), 10),
            ind(1, Fitness::Value(1.0), 10),
            ind(2, Fitness::Value(2.0), 10),
        ];
        let (e, ne) = top_k_elite(pop.clone(), 1).unwrap();
        assert_eq!(e[0].id, 1);
        assert_eq!(ne.len(), 2);
        let (_, ne) = top_k_elite(pop, 2).unwrap();
        assert_eq!(ne.len(), 1);

        let ties = vec![ind(5, Fitness::Value(1.0), 20), ind(4, Fitness::Value(1.0), 20), ind(3, Fitness::Value(1.0), 30)];
        let (e, _) = top_k_elite(ties, 3).unwrap();
        assert_eq!(e.iter().map(|i| i.id).collect::<Vec<_>>(), vec![4, 5, 3]);
    }

    #[test]
    fn disqualified_never_elite() {
        let pop = vec![ind(0, Fitness::Disqualified, 1), ind(1, Fitness::Value(9.0), 500), ind(2, Fitness::Value(8.0), 500)];
        let (e, ne) = top_k_elite(pop.clone(), 2).unwrap();
        assert!(e.iter().all(|i| i.fitness.is_finite()));
        assert_eq!(ne[0].id, 0);
        assert!(matches!(top_k_elite(pop, 3), Err(DiscoveryError::TooFewFinite { finite: 2, needed: 3 })));
    }

    #[test]
    fn config_defaults_and_checks() {
        let mut c = DiscoveryConfig {
            train_instances: vec!["a.vrp".into()],
            ..DiscoveryConfig::default()
        };
        assert!(c.check().is_ok());
        assert_eq!((c.n_init, c.n_elite, c.n_offspring, c.iterations), (100, 10, 30, 40));
        c.crossover_bias = 0.5;
        assert!(c.check().is_err());
        c.crossover_bias = 0.8;
        c.validation_instances = vec!["a.vrp".into()];
        assert!(c.check().is_err());
        let err = serde_json::from_str::<DiscoveryConfig>(r#"{"n_elit": 3}"#);
        assert!(err.is_err());
    }
}
