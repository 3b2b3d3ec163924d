//! The run configuration file and output directory handling.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vrpagent_core::io::sha256_hex;
use vrpagent_core::splits::SplitManifest;
use vrpagent_core::{GenParams, LnsConfig};
use vrpagent_discovery::ga::DiscoveryConfig;

/// File name of the resolved configuration in every output directory.
pub const ECHO_FILE: &str = "vrpagent.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorLabels {
    pub remove: String,
    pub order: String,
}

impl Default for OperatorLabels {
    fn default() -> Self {
        OperatorLabels {
            remove: "seed_random".into(),
            order: "random".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    pub params: GenParams,
    pub count: u64,
    pub validation_count: u64,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            params: GenParams::default(),
            count: 64,
            validation_count: 0,
        }
    }
}

/// Everything a command can be configured with. Flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lns: LnsConfig,
    pub operators: OperatorLabels,
    pub gen: GenSection,
    pub discovery: DiscoveryConfig,
    /// Split manifests written by `gen`; their instances are appended to
    /// the discovery training and validation sets.
    pub train_manifest: Option<PathBuf>,
    pub validation_manifest: Option<PathBuf>,
    /// Build cache for compiled candidates.
    pub cache_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lns: LnsConfig::default(),
            operators: OperatorLabels::default(),
            gen: GenSection::default(),
            discovery: DiscoveryConfig::default(),
            train_manifest: None,
            validation_manifest: None,
            cache_dir: PathBuf::from(".vrpagent-cache"),
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(parent)?;
        config.rebase(&base);
        Ok(config)
    }

    /// Anchors relative paths at `base`, so the echoed config stays valid
    /// wherever it is re-read from.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.discovery.train_instances.iter_mut().for_each(fix);
        self.discovery.validation_instances.iter_mut().for_each(fix);
        self.train_manifest.iter_mut().for_each(fix);
        self.validation_manifest.iter_mut().for_each(fix);
        fix(&mut self.cache_dir);
    }

    /// Moves manifest instances into the discovery sets.
    pub fn expand_manifests(&mut self) -> Result<()> {
        if let Some(path) = self.train_manifest.take() {
            self.discovery.train_instances.extend(manifest_paths(&path)?);
        }
        if let Some(path) = self.validation_manifest.take() {
            self.discovery.validation_instances.extend(manifest_paths(&path)?);
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn manifest_paths(path: &Path) -> Result<Vec<PathBuf>> {
    let manifest = SplitManifest::load(path)?;
    Ok(manifest.paths(path.parent().unwrap_or(Path::new("."))))
}

/// Creates `root/<command>-<digest>-<timestamp>`, never reusing an existing
/// directory.
pub fn fresh_output_dir(root: &Path, command: &str, digest: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let stem = format!("{command}-{}-{stamp}", &digest[..12]);
    for attempt in 0..1000 {
        let name = if attempt == 0 { stem.clone() } else { format!("{stem}-{attempt}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    bail!("no free output directory under {}", root.display())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn echo(dir: &Path, config: &RunConfig) -> Result<()> {
    write_json(&dir.join(ECHO_FILE), config)
}
