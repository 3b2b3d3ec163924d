//! Builds candidate C++ operator source into a shared library linked
//! against the pinned shim. Artifacts are content addressed.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vrpagent_core::io::sha256_hex;

/// Bumped whenever the shim's C interface or headers change.
pub const SHIM_VERSION: u32 = 1;

const SHIM_FILES: [(&str, &str); 6] = [
    ("Instance.h", include_str!("../shim/Instance.h")),
    ("Solution.h", include_str!("../shim/Solution.h")),
    ("Tour.h", include_str!("../shim/Tour.h")),
    ("Utils.h", include_str!("../shim/Utils.h")),
    ("AgentDesigned.h", include_str!("../shim/AgentDesigned.h")),
    ("shim.cpp", include_str!("../shim/shim.cpp")),
];

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("compilation failed")]
    Compile { log: String },
    #[error("compilation exceeded {seconds} s")]
    Timeout { seconds: f64, log: String },
    #[error("empty source")]
    EmptySource,
    /// The toolchain itself is unusable; not the candidate's fault.
    #[error("toolchain unavailable: {0}")]
    Toolchain(String),
    #[error("build cache I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BuildError {
    pub fn log(&self) -> String {
        match self {
            BuildError::Compile { log } | BuildError::Timeout { log, .. } => log.clone(),
            other => other.to_string(),
        }
    }

    /// True when the failure is attributable to the candidate source.
    pub fn is_candidate_fault(&self) -> bool {
        matches!(self, BuildError::Compile { .. } | BuildError::Timeout { .. } | BuildError::EmptySource)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BuildError + '_ {
    move |source| BuildError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub digest: String,
    pub path: PathBuf,
    /// Served from the cache without invoking the compiler.
    pub cached: bool,
}

/// sha256 over the shim version, the shim text and the candidate source.
pub fn artifact_digest(source: &str) -> String {
    let mut text = format!("shim-v{SHIM_VERSION}\n");
    for (name, body) in SHIM_FILES {
        text.push_str(name);
        text.push('\n');
        text.push_str(body);
    }
    text.push_str("\ncandidate\n");
    text.push_str(source);
    sha256_hex(text.as_bytes())
}

#[derive(Debug, Clone)]
pub struct Compiler {
    pub cxx: PathBuf,
    pub flags: Vec<String>,
    pub cache_dir: PathBuf,
    pub timeout: Duration,
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedFailure {
    timeout: bool,
    log: String,
}

impl Compiler {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        Compiler {
            cxx: std::env::var_os("CXX").map(PathBuf::from).unwrap_or_else(|| "g++".into()),
            flags: ["-O2", "-std=c++17", "-fPIC", "-w"].map(String::from).to_vec(),
            cache_dir: cache_dir.into(),
            timeout: Duration::from_secs(60),
        }
    }

    fn shim_dir(&self) -> PathBuf {
        let tag = &artifact_digest("")[..12];
        self.cache_dir.join(format!("shim-v{SHIM_VERSION}-{tag}"))
    }

    fn run(&self, args: &[&std::ffi::OsStr], cwd: &Path) -> Result<(bool, String), BuildError> {
        let mut child = Command::new(&self.cxx)
            .args(&self.flags)
            .args(args)
            .current_dir(cwd)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| BuildError::Toolchain(format!("cannot run {}: {e}", self.cxx.display())))?;
        let mut stderr = child.stderr.take().expect("piped stderr");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let started = Instant::now();
        loop {
            if let Some(status) = child.try_wait().map_err(|e| BuildError::Toolchain(e.to_string()))? {
                let log = reader.join().unwrap_or_default();
                return Ok((status.success(), log));
            }
            if started.elapsed() > self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                let log = reader.join().unwrap_or_default();
                return Err(BuildError::Timeout {
                    seconds: self.timeout.as_secs_f64(),
                    log,
                });
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    /// Writes the shim headers and compiles the shim object once.
    pub fn prepare(&self) -> Result<PathBuf, BuildError> {
        let dir = self.shim_dir();
        let object = dir.join("shim.o");
        if object.exists() {
            return Ok(dir);
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (name, body) in SHIM_FILES {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io_err(&p))?;
        }
        let partial = dir.join(format!("shim.o.{}", std::process::id()));
        let (ok, log) = self.run(&["-c".as_ref(), "shim.cpp".as_ref(), "-o".as_ref(), partial.as_os_str()], &dir)?;
        if !ok {
            return Err(BuildError::Toolchain(format!("shim does not compile:\n{log}")));
        }
        fs::rename(&partial, &object).map_err(io_err(&object))?;
        Ok(dir)
    }

    /// Compiles `source` or returns the cached artifact (or cached failure).
    pub fn build(&self, source: &str) -> Result<Artifact, BuildError> {
        if source.trim().is_empty() {
            return Err(BuildError::EmptySource);
        }
        let shim = self.prepare()?;
        let digest = artifact_digest(source);
        let dir = self.cache_dir.join("artifacts");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let lib = dir.join(format!("{digest}.so"));
        let failure = dir.join(format!("{digest}.fail.json"));
        if lib.exists() {
            return Ok(Artifact {
                digest,
                path: lib,
                cached: true,
            });
        }
        if let Ok(text) = fs::read_to_string(&failure) {
            if let Ok(f) = serde_json::from_str::<CachedFailure>(&text) {
                return Err(if f.timeout {
                    BuildError::Timeout {
                        seconds: self.timeout.as_secs_f64(),
                        log: f.log,
                    }
                } else {
                    BuildError::Compile { log: f.log }
                });
            }
        }

        let work = dir.join(format!("{digest}.build.{}", std::process::id()));
        fs::create_dir_all(&work).map_err(io_err(&work))?;
        let cpp = work.join("candidate.cpp");
        fs::write(&cpp, source).map_err(io_err(&cpp))?;
        let out = work.join("candidate.so");
        let include = format!("-I{}", shim.display());
        let result = self.run(
            &[
                "-shared".as_ref(),
                include.as_ref(),
                "candidate.cpp".as_ref(),
                shim.join("shim.o").as_os_str(),
                "-o".as_ref(),
                out.as_os_str(),
            ],
            &work,
        );
        let outcome = match result {
            Ok((true, _)) => fs::rename(&out, &lib).map_err(io_err(&lib)).map(|_| Artifact {
                digest,
                path: lib,
                cached: false,
            }),
            Ok((false, log)) => {
                let log = if log.trim().is_empty() { "compiler exited with failure".to_string() } else { log };
                let record = serde_json::to_string(&CachedFailure { timeout: false, log: log.clone() }).expect("json");
                let _ = fs::write(&failure, record);
                Err(BuildError::Compile { log })
            }
            Err(BuildError::Timeout { seconds, log }) => {
                let record = serde_json::to_string(&CachedFailure { timeout: true, log: log.clone() }).expect("json");
                let _ = fs::write(&failure, record);
                Err(BuildError::Timeout { seconds, log })
            }
            Err(e) => Err(e),
        };
        let _ = fs::remove_dir_all(&work);
        outcome
    }
}

/// Non-empty lines after trimming trailing whitespace.
pub fn line_count(source: &str) -> usize {
    source.lines().filter(|l| !l.trim_end().is_empty()).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_source() {
        assert_ne!(artifact_digest("a"), artifact_digest("b"));
        assert_eq!(artifact_digest("a"), artifact_digest("a"));
    }

    #[test]
    fn line_count_skips_blank_lines() {
        assert_eq!(line_count("a\n\n  \nb  \n\tc\n"), 3);
        assert_eq!(line_count(""), 0);
    }
}
