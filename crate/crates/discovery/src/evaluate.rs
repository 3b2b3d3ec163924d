//! Supervisor side of candidate evaluation: one child process per instance,
//! wall-clock and memory limits, independent re-validation of the returned
//! tours.

use std::ffi::OsString;
use std::fs;
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vrpagent_core::io::sha256_hex;
use vrpagent_core::validate::OBJECTIVE_EPS;
use vrpagent_core::{generate, io as instance_io, validate, GenParams, Instance, ProblemKind, Solution};

use crate::compile::{Artifact, BuildError, Compiler, SHIM_VERSION};
use crate::fitness::{eq1, Fitness};
use crate::worker::{ResultRecord, WorkerTask};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    /// Toolchain or filesystem trouble that is not the candidate's fault.
    #[error("evaluation environment: {0}")]
    Environment(String),
    #[error(transparent)]
    Instance(#[from] vrpagent_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    CompileError,
    RuntimeError,
    Timeout,
    InvalidOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: String,
    pub objective: f64,
    pub feasible: bool,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub status: EvalStatus,
    pub per_instance: Vec<InstanceResult>,
    pub build_log: String,
    /// What went wrong, empty when `status` is ok.
    pub detail: String,
    pub shim_version: u32,
    pub artifact: Option<String>,
}

impl EvalReport {
    fn failed(status: EvalStatus, detail: impl Into<String>, artifact: Option<String>) -> Self {
        EvalReport {
            status,
            per_instance: Vec::new(),
            build_log: String::new(),
            detail: detail.into(),
            shim_version: SHIM_VERSION,
            artifact,
        }
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.per_instance.iter().map(|r| r.objective).collect()
    }

    pub fn mean_objective(&self) -> Option<f64> {
        (self.status == EvalStatus::Ok).then(|| crate::fitness::mean(&self.objectives()))
    }
}

/// Eq. 1 for an ok report, disqualification otherwise.
pub fn fitness_from_report(report: &EvalReport, line_count: usize, lambda: f64) -> Fitness {
    if report.status != EvalStatus::Ok
        || report.per_instance.is_empty()
        || report.per_instance.iter().any(|r| !r.feasible || !r.objective.is_finite())
    {
        return Fitness::Disqualified;
    }
    Fitness::Value(eq1(&report.objectives(), line_count, lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalManifest {
    pub instances: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    /// Seconds of LNS per instance; also caps iteration-budget runs.
    pub per_instance_time: f64,
    /// Deterministic iteration budget instead of wall clock.
    pub iteration_limit: Option<u64>,
    pub source: String,
    pub memory_limit: u64,
    pub build_timeout: f64,
}

impl EvalManifest {
    pub fn check(&self) -> Result<(), EvalError> {
        if self.instances.is_empty() {
            return Err(EvalError::Manifest("no instances".into()));
        }
        if self.instances.len() != self.seeds.len() {
            return Err(EvalError::Manifest(format!(
                "{} instances but {} seeds",
                self.instances.len(),
                self.seeds.len()
            )));
        }
        if !(self.per_instance_time > 0.0 && self.per_instance_time.is_finite()) {
            return Err(EvalError::Manifest("per_instance_time must be positive".into()));
        }
        if self.memory_limit == 0 || !(self.build_timeout > 0.0) {
            return Err(EvalError::Manifest("limits must be positive".into()));
        }
        if self.iteration_limit == Some(0) {
            return Err(EvalError::Manifest("iteration_limit must be positive".into()));
        }
        Ok(())
    }

    /// Wall-clock allowance for one child before it counts as timed out.
    pub fn deadline(&self) -> Duration {
        Duration::from_secs_f64(self.per_instance_time * 1.1 + 1.0)
    }
}

/// Per-instance seed from a splittable counter: adding instances never
/// changes the seeds of existing ones.
pub fn instance_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How to start a worker: `program prefix.. <task.json>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerCommand {
    pub program: PathBuf,
    pub prefix: Vec<OsString>,
}

impl WorkerCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        WorkerCommand {
            program: program.into(),
            prefix: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluator {
    pub compiler: Compiler,
    pub worker: WorkerCommand,
    /// Concurrent child processes.
    pub workers: usize,
    /// Smoke-test on a tiny instance before the full evaluation.
    pub preflight: bool,
    /// Reuse reports for identical (artifact, manifest) in iteration mode.
    pub cache_reports: bool,
    scratch: PathBuf,
}

static TASK_COUNTER: AtomicU64 = AtomicU64::new(0);

struct Target<'a> {
    path: &'a Path,
    instance: &'a Instance,
    id: String,
    seed: u64,
}

type ChildResult = Result<ResultRecord, (EvalStatus, String)>;

fn tail(text: &str, max: usize) -> &str {
    let start = text.len().saturating_sub(max);
    let start = (start..=text.len()).find(|&i| text.is_char_boundary(i)).unwrap_or(text.len());
    &text[start..]
}

fn instance_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Checks a child's answer against the instance, independent of the child.
pub fn revalidate(instance: &Instance, id: &str, record: &ResultRecord) -> Result<(), String> {
    if record.id != id {
        return Err(format!("record for `{}` where `{id}` was expected", record.id));
    }
    if !record.feasible {
        return Err("worker reported an infeasible solution".into());
    }
    let solution = Solution::from_tours(instance, record.tours.clone()).map_err(|e| format!("bad tours: {e}"))?;
    let report = validate(&solution, instance);
    if !report.feasible() {
        return Err(format!("infeasible solution: {:?}", report.violations.first()));
    }
    if instance.kind() != ProblemKind::Pcvrp && !solution.is_complete() {
        return Err(format!("{} customers unserved", solution.unassigned().len()));
    }
    let recomputed = solution.objective();
    if !((record.objective - recomputed).abs() <= OBJECTIVE_EPS) {
        return Err(format!("reported objective {} but tours cost {recomputed}", record.objective));
    }
    Ok(())
}

impl Evaluator {
    pub fn new(compiler: Compiler, worker: WorkerCommand) -> Self {
        let scratch = compiler.cache_dir.join("tasks");
        Evaluator {
            compiler,
            worker,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            preflight: true,
            cache_reports: true,
            scratch,
        }
    }

    pub fn build(&self, source: &str) -> Result<Artifact, BuildError> {
        self.compiler.build(source)
    }

    /// Builds and evaluates `manifest.source`. Candidate failures are
    /// reported through the status; only environment trouble is an error.
    pub fn run(&self, manifest: &EvalManifest) -> Result<EvalReport, EvalError> {
        manifest.check()?;
        let mut compiler = self.compiler.clone();
        compiler.timeout = Duration::from_secs_f64(manifest.build_timeout);
        match compiler.build(&manifest.source) {
            Ok(artifact) => self.evaluate(&artifact, manifest),
            Err(e) if e.is_candidate_fault() => Ok(EvalReport {
                build_log: e.log(),
                ..EvalReport::failed(EvalStatus::CompileError, e.to_string(), None)
            }),
            Err(e) => Err(EvalError::Environment(e.to_string())),
        }
    }

    fn cache_key(&self, artifact: &Artifact, manifest: &EvalManifest) -> Result<String, EvalError> {
        let mut text = format!(
            "{}|{:?}|{}|{}|{}|{}\n",
            artifact.digest, manifest.iteration_limit, manifest.per_instance_time, manifest.memory_limit, self.preflight, SHIM_VERSION
        );
        for (path, seed) in manifest.instances.iter().zip(&manifest.seeds) {
            let bytes = fs::read(path).map_err(|e| EvalError::Environment(format!("{}: {e}", path.display())))?;
            text.push_str(&format!("{}|{}|{}\n", instance_id(path), seed, sha256_hex(&bytes)));
        }
        Ok(sha256_hex(text.as_bytes()))
    }

    /// Runs the LNS with `artifact` on every manifest instance.
    pub fn evaluate(&self, artifact: &Artifact, manifest: &EvalManifest) -> Result<EvalReport, EvalError> {
        manifest.check()?;
        let cache_path = if self.cache_reports && manifest.iteration_limit.is_some() {
            let key = self.cache_key(artifact, manifest)?;
            Some(self.compiler.cache_dir.join("reports").join(format!("{key}.json")))
        } else {
            None
        };
        if let Some(report) = cache_path
            .as_ref()
            .and_then(|p| fs::read_to_string(p).ok())
            .and_then(|t| serde_json::from_str::<EvalReport>(&t).ok())
        {
            return Ok(report);
        }

        let instances: Vec<Instance> = manifest
            .instances
            .iter()
            .map(instance_io::load)
            .collect::<Result<_, _>>()?;
        let report = self.evaluate_loaded(artifact, manifest, &instances)?;

        if let Some(path) = cache_path {
            let dir = path.parent().expect("reports dir");
            fs::create_dir_all(dir).map_err(|e| EvalError::Environment(format!("{}: {e}", dir.display())))?;
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            fs::write(&tmp, serde_json::to_string(&report).expect("report serializes"))
                .and_then(|_| fs::rename(&tmp, &path))
                .map_err(|e| EvalError::Environment(format!("{}: {e}", path.display())))?;
        }
        Ok(report)
    }

    fn evaluate_loaded(&self, artifact: &Artifact, manifest: &EvalManifest, instances: &[Instance]) -> Result<EvalReport, EvalError> {
        let digest = Some(artifact.digest.clone());
        if self.preflight {
            let (path, instance) = self.preflight_instance(instances[0].kind())?;
            let target = Target {
                path: &path,
                instance: &instance,
                id: instance_id(&path),
                seed: 0,
            };
            let smoke = EvalManifest {
                per_instance_time: 1.0,
                iteration_limit: Some(200),
                ..manifest.clone()
            };
            if let Err((status, detail)) = self.run_child(artifact, &smoke, &target)? {
                return Ok(EvalReport::failed(status, format!("preflight: {detail}"), digest));
            }
        }

        let targets: Vec<Target> = manifest
            .instances
            .iter()
            .zip(instances)
            .zip(&manifest.seeds)
            .map(|((path, instance), &seed)| Target {
                path,
                instance,
                id: instance_id(path),
                seed,
            })
            .collect();
        let results = self.run_all(artifact, manifest, &targets)?;

        let mut per_instance = Vec::with_capacity(results.len());
        for (target, result) in targets.iter().zip(results) {
            match result {
                Ok(r) => per_instance.push(InstanceResult {
                    id: r.id,
                    objective: r.objective,
                    feasible: r.feasible,
                    iterations: r.iterations,
                }),
                Err((status, detail)) => {
                    return Ok(EvalReport::failed(status, format!("{}: {detail}", target.id), digest));
                }
            }
        }
        Ok(EvalReport {
            status: EvalStatus::Ok,
            per_instance,
            build_log: String::new(),
            detail: String::new(),
            shim_version: SHIM_VERSION,
            artifact: digest,
        })
    }

    fn preflight_instance(&self, kind: ProblemKind) -> Result<(PathBuf, Instance), EvalError> {
        let instance = generate(&GenParams::new(kind, 25, 0))?;
        let path = self.compiler.cache_dir.join("preflight").join(format!("{}.vrp", kind.as_str()));
        if !path.exists() {
            let dir = path.parent().expect("preflight dir");
            fs::create_dir_all(dir).map_err(|e| EvalError::Environment(format!("{}: {e}", dir.display())))?;
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            instance_io::save(&instance, &tmp)?;
            fs::rename(&tmp, &path).map_err(|e| EvalError::Environment(e.to_string()))?;
        }
        Ok((path, instance))
    }

    fn run_all(&self, artifact: &Artifact, manifest: &EvalManifest, targets: &[Target]) -> Result<Vec<ChildResult>, EvalError> {
        let workers = self.workers.clamp(1, targets.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ChildResult, EvalError>>>> = targets.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= targets.len() {
                        break;
                    }
                    let r = self.run_child(artifact, manifest, &targets[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every target ran"))
            .collect()
    }

    fn run_child(&self, artifact: &Artifact, manifest: &EvalManifest, target: &Target) -> Result<ChildResult, EvalError> {
        fs::create_dir_all(&self.scratch).map_err(|e| EvalError::Environment(format!("{}: {e}", self.scratch.display())))?;
        let task = WorkerTask {
            library: artifact.path.clone(),
            instance: target.path.to_path_buf(),
            id: target.id.clone(),
            seed: target.seed,
            time_limit: manifest.per_instance_time,
            iteration_limit: manifest.iteration_limit,
        };
        let task_path = self.scratch.join(format!(
            "{}-{}-{}.json",
            std::process::id(),
            TASK_COUNTER.fetch_add(1, Ordering::SeqCst),
            &artifact.digest[..12]
        ));
        fs::write(&task_path, serde_json::to_string(&task).expect("task serializes"))
            .map_err(|e| EvalError::Environment(format!("{}: {e}", task_path.display())))?;
        let outcome = self.supervise(&task_path, manifest);
        let _ = fs::remove_file(&task_path);
        let (stdout, stderr) = match outcome? {
            Ok(out) => out,
            Err(failure) => return Ok(Err(failure)),
        };

        let lines: Vec<&str> = stdout.lines().filter(|l| !l.trim().is_empty()).collect();
        let record: ResultRecord = match lines.as_slice() {
            [line] => match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => return Ok(Err((EvalStatus::InvalidOutput, format!("malformed record: {e}")))),
            },
            _ => {
                return Ok(Err((
                    EvalStatus::InvalidOutput,
                    format!("expected one record, got {} lines; stderr: {}", lines.len(), tail(&stderr, 2000)),
                )))
            }
        };
        if let Err(why) = revalidate(target.instance, &target.id, &record) {
            return Ok(Err((EvalStatus::InvalidOutput, why)));
        }
        Ok(Ok(record))
    }

    /// Runs one child to completion or deadline. Returns its output, or the
    /// failure verdict.
    fn supervise(&self, task: &Path, manifest: &EvalManifest) -> Result<Result<(String, String), (EvalStatus, String)>, EvalError> {
        let mut cmd = Command::new(&self.worker.program);
        cmd.args(&self.worker.prefix)
            .arg(task)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let memory = manifest.memory_limit;
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                let mem = libc::rlimit {
                    rlim_cur: memory as libc::rlim_t,
                    rlim_max: memory as libc::rlim_t,
                };
                let core = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
                if libc::setrlimit(libc::RLIMIT_AS, &mem) != 0 || libc::setrlimit(libc::RLIMIT_CORE, &core) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| EvalError::Environment(format!("cannot start worker {}: {e}", self.worker.program.display())))?;
        let mut out = child.stdout.take().expect("piped stdout");
        let mut err = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = out.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = err.read_to_string(&mut s);
            s
        });

        let deadline = manifest.deadline();
        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait().map_err(|e| EvalError::Environment(e.to_string()))? {
                break Some(status);
            }
            if started.elapsed() > deadline {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        Ok(match status {
            None => Err((
                EvalStatus::Timeout,
                format!("killed after {:.1} s", deadline.as_secs_f64()),
            )),
            Some(s) if s.success() => Ok((stdout, stderr)),
            Some(s) => {
                let how = match (s.code(), s.signal()) {
                    (Some(code), _) => format!("exit code {code}"),
                    (None, Some(sig)) => format!("signal {sig}"),
                    _ => "abnormal exit".to_string(),
                };
                Err((EvalStatus::RuntimeError, format!("{how}; stderr: {}", tail(&stderr, 2000))))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(status: EvalStatus, objectives: &[f64]) -> EvalReport {
        EvalReport {
            per_instance: objectives
                .iter()
                .enumerate()
                .map(|(i, &objective)| InstanceResult {
                    id: i.to_string(),
                    objective,
                    feasible: true,
                    iterations: 1,
                })
                .collect(),
            ..EvalReport::failed(status, "", None)
        }
    }

    #[test]
    fn fitness_mapping() {
        let ok = report(EvalStatus::Ok, &[41.0, 41.28]);
        let f = fitness_from_report(&ok, 150, 2e-4).value().unwrap();
        assert!((f - 41.17).abs() < 1e-9);
        assert_eq!(fitness_from_report(&ok, 150, 0.0), Fitness::Value((41.0 + 41.28) / 2.0));
        for s in [EvalStatus::CompileError, EvalStatus::RuntimeError, EvalStatus::Timeout, EvalStatus::InvalidOutput] {
            assert_eq!(fitness_from_report(&report(s, &[1.0]), 10, 0.0), Fitness::Disqualified);
        }
        let mut bad = ok.clone();
        bad.per_instance[1].feasible = false;
        assert_eq!(fitness_from_report(&bad, 10, 0.0), Fitness::Disqualified);
    }

    #[test]
    fn seeds_are_stable_under_extension() {
        let a: Vec<u64> = (0..4).map(|i| instance_seed(7, 0, i)).collect();
        let b: Vec<u64> = (0..8).map(|i| instance_seed(7, 0, i)).collect();
        assert_eq!(a[..], b[..4]);
        assert_ne!(instance_seed(7, 1, 0), instance_seed(7, 0, 0));
        let mut uniq = b.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), b.len());
    }

    #[test]
    fn deadline_has_ten_percent_grace_plus_one_second() {
        let m = EvalManifest {
            instances: vec!["a".into()],
            seeds: vec![1],
            per_instance_time: 2.0,
            iteration_limit: None,
            source: String::new(),
            memory_limit: 1,
            build_timeout: 1.0,
        };
        assert_eq!(m.deadline(), Duration::from_secs_f64(3.2));
    }
}
