//! Train / validation instance sets with disjoint seed ranges.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{generate, GenParams};
use crate::instance::Instance;
use crate::io;

pub const MANIFEST_FORMAT: &str = "vrpagent-split 1";

/// One named split: `count` instances seeded `base_seed + offset + i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub offset: u64,
    pub count: u64,
}

impl SplitSpec {
    pub fn new(name: &str, offset: u64, count: u64) -> Self {
        SplitSpec {
            name: name.to_string(),
            offset,
            count,
        }
    }

    fn seeds(&self, base: u64) -> std::ops::Range<u64> {
        base.wrapping_add(self.offset)..base.wrapping_add(self.offset).wrapping_add(self.count)
    }
}

/// Default layout: train at offset 0, validation at 1,000,000.
pub fn default_splits(train: u64, validation: u64) -> Vec<SplitSpec> {
    vec![
        SplitSpec::new("train", 0, train),
        SplitSpec::new("validation", 1_000_000, validation),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub seed: u64,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub format: String,
    pub split: String,
    pub params: GenParams,
    pub entries: Vec<ManifestEntry>,
}

impl SplitManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: SplitManifest = serde_json::from_str(&text).map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: manifest.format,
            });
        }
        Ok(manifest)
    }

    /// Absolute instance paths, resolved against `dir`.
    pub fn paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.entries.iter().map(|e| dir.join(&e.path)).collect()
    }

    /// Loads every instance and checks its recorded checksum.
    pub fn load_instances(&self, dir: &Path) -> Result<Vec<Instance>> {
        self.entries
            .iter()
            .map(|e| {
                let path = dir.join(&e.path);
                let inst = io::load(&path)?;
                let actual = io::checksum_of(&inst);
                if actual != e.checksum {
                    return Err(Error::Checksum {
                        path,
                        recorded: e.checksum.clone(),
                        computed: actual,
                    });
                }
                Ok(inst)
            })
            .collect()
    }
}

/// Rejects splits whose seed ranges intersect.
pub fn check_disjoint(specs: &[SplitSpec]) -> Result<()> {
    for (i, a) in specs.iter().enumerate() {
        for b in &specs[i + 1..] {
            if a.name == b.name {
                return Err(Error::Config(format!("split `{}` listed twice", a.name)));
            }
            let a_end = a.offset.checked_add(a.count).ok_or_else(|| Error::Config("seed range overflow".into()))?;
            let b_end = b.offset.checked_add(b.count).ok_or_else(|| Error::Config("seed range overflow".into()))?;
            if a.offset < b_end && b.offset < a_end {
                return Err(Error::Config(format!(
                    "seed ranges of `{}` and `{}` overlap",
                    a.name, b.name
                )));
            }
        }
    }
    Ok(())
}

/// Generates every split under `dir/<name>/` and writes
/// `dir/<name>.manifest.json` for each. Returns the manifests in order.
pub fn make_splits(dir: &Path, params: &GenParams, base_seed: u64, specs: &[SplitSpec]) -> Result<Vec<SplitManifest>> {
    check_disjoint(specs)?;
    let mut manifests = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut entries = Vec::with_capacity(spec.count as usize);
        for (i, seed) in spec.seeds(base_seed).enumerate() {
            let rel = format!("{}/{}_{:04}.vrp", spec.name, params.kind, i);
            let inst = generate(&GenParams {
                seed,
                ..params.clone()
            })?;
            let checksum = io::save(&inst, dir.join(&rel))?;
            entries.push(ManifestEntry { path: rel, seed, checksum });
        }
        let manifest = SplitManifest {
            format: MANIFEST_FORMAT.to_string(),
            split: spec.name.clone(),
            params: GenParams {
                seed: base_seed,
                ..params.clone()
            },
            entries,
        };
        let path = dir.join(format!("{}.manifest.json", spec.name));
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        manifests.push(manifest);
    }
    Ok(manifests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ProblemKind;

    #[test]
    fn overlapping_ranges_rejected() {
        let specs = vec![SplitSpec::new("a", 0, 10), SplitSpec::new("b", 5, 10)];
        assert!(matches!(check_disjoint(&specs), Err(Error::Config(_))));
        assert!(check_disjoint(&default_splits(64, 16)).is_ok());
    }

    #[test]
    fn splits_are_disjoint_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let params = GenParams::new(ProblemKind::Cvrp, 5, 0);
        let a = make_splits(dir.path(), &params, 42, &default_splits(64, 16)).unwrap();
        let seeds: std::collections::BTreeSet<u64> =
            a.iter().flat_map(|m| m.entries.iter().map(|e| e.seed)).collect();
        assert_eq!(seeds.len(), 80);

        let other = tempfile::tempdir().unwrap();
        let b = make_splits(other.path(), &params, 42, &default_splits(64, 16)).unwrap();
        assert_eq!(a, b);

        let loaded = SplitManifest::load(dir.path().join("validation.manifest.json")).unwrap();
        assert_eq!(loaded, a[1]);
        assert_eq!(loaded.load_instances(dir.path()).unwrap().len(), 16);
    }
}
