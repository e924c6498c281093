//! Stage cache backed by a manifest in the output directory.
//!
//! A stage is identified by a key such as `10x25/train/A` and fingerprinted by
//! the hash of its own parameters together with the hashes of the stages it
//! reads. It is skipped when the manifest holds the same hash and every
//! recorded artifact is still on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub schema_version: u32,
    pub checkpoint_version: u32,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: moflp_core::io::SCHEMA_VERSION,
            checkpoint_version: moflp_gcn::checkpoint::CHECKPOINT_VERSION,
            stages: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub hash: String,
    pub seed: Option<u64>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Fingerprint of a stage: sha256 over its name, its parameters as JSON and
/// the hashes of its inputs.
pub fn stage_hash<T: Serialize>(stage: &str, params: &T, upstream: &[&str]) -> String {
    let doc = serde_json::json!({
        "stage": stage,
        "params": params,
        "upstream": upstream,
    });
    let bytes = serde_json::to_vec(&doc).expect("stage parameters serialise to JSON");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageEvent {
    pub key: String,
    pub ran: bool,
}

pub struct Cache {
    root: PathBuf,
    manifest: Manifest,
    force: bool,
    events: Vec<StageEvent>,
}

impl Cache {
    /// Opens the cache rooted at `root`, reading an existing manifest.
    pub fn open(root: &Path, force: bool) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?
        } else {
            Manifest::default()
        };
        Ok(Cache {
            root: root.to_path_buf(),
            manifest,
            force,
            events: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Stages visited so far, in order.
    pub fn events(&self) -> &[StageEvent] {
        &self.events
    }

    fn artifacts_present(&self, record: &StageRecord) -> bool {
        record.artifacts.iter().all(|a| self.root.join(a).exists())
    }

    /// Runs `body` unless `key` is cached under `hash`.
    ///
    /// `body` returns the artifacts it wrote. A record with another hash is an
    /// error unless the cache was opened with `force`; when its artifacts are
    /// gone there is nothing to protect and the stage simply runs.
    pub fn run(
        &mut self,
        key: &str,
        hash: &str,
        seed: Option<u64>,
        body: impl FnOnce() -> Result<Vec<PathBuf>>,
    ) -> Result<()> {
        if let Some(record) = self.manifest.stages.get(key) {
            let present = self.artifacts_present(record);
            if record.hash == hash && present {
                self.events.push(StageEvent {
                    key: key.to_string(),
                    ran: false,
                });
                return Ok(());
            }
            if record.hash != hash && present && !self.force {
                return Err(Error::StaleCache {
                    stage: key.to_string(),
                    cached: short(&record.hash),
                    current: short(hash),
                });
            }
        }
        let written = body()?;
        let mut artifacts = Vec::with_capacity(written.len());
        for path in written {
            let rel = path.strip_prefix(&self.root).map_err(|_| Error::Corrupt {
                path: path.clone(),
                message: format!("artifact lies outside the output directory {}", self.root.display()),
            })?;
            artifacts.push(rel.to_string_lossy().replace('\\', "/"));
        }
        self.manifest.stages.insert(
            key.to_string(),
            StageRecord {
                hash: hash.to_string(),
                seed,
                artifacts,
            },
        );
        self.save()?;
        self.events.push(StageEvent {
            key: key.to_string(),
            ran: true,
        });
        Ok(())
    }

    fn save(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join(MANIFEST_FILE);
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises") + "\n";
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

fn short(hash: &str) -> String {
    hash.chars().take(12).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) -> PathBuf {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, "x").unwrap();
        path.to_path_buf()
    }

    #[test]
    fn hash_depends_on_params_and_upstream() {
        let a = stage_hash("gen", &(1, 2), &[]);
        assert_eq!(a, stage_hash("gen", &(1, 2), &[]));
        assert_ne!(a, stage_hash("gen", &(1, 3), &[]));
        assert_ne!(a, stage_hash("gen", &(1, 2), &["u"]));
        assert_ne!(a, stage_hash("solve", &(1, 2), &[]));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn second_run_is_cached_and_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("s/out.txt");
        let mut cache = Cache::open(dir.path(), false).unwrap();
        cache.run("s", "h1", Some(3), || Ok(vec![touch(&file)])).unwrap();
        let mut again = Cache::open(dir.path(), false).unwrap();
        again.run("s", "h1", Some(3), || panic!("should be cached")).unwrap();
        assert_eq!(again.events(), &[StageEvent { key: "s".into(), ran: false }]);
        assert_eq!(again.manifest().stages["s"].artifacts, vec!["s/out.txt".to_string()]);
    }

    #[test]
    fn changed_hash_is_stale_unless_forced() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("out.txt");
        let mut cache = Cache::open(dir.path(), false).unwrap();
        cache.run("s", "h1", None, || Ok(vec![touch(&file)])).unwrap();
        let err = cache.run("s", "h2", None, || Ok(vec![touch(&file)])).unwrap_err();
        assert!(matches!(err, Error::StaleCache { .. }));
        assert!(err.to_string().contains("--force"));
        let mut forced = Cache::open(dir.path(), true).unwrap();
        forced.run("s", "h2", None, || Ok(vec![touch(&file)])).unwrap();
        assert_eq!(forced.manifest().stages["s"].hash, "h2");
    }

    #[test]
    fn missing_artifact_reruns() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("out.txt");
        let mut cache = Cache::open(dir.path(), false).unwrap();
        cache.run("s", "h1", None, || Ok(vec![touch(&file)])).unwrap();
        fs::remove_file(&file).unwrap();
        cache.run("s", "h1", None, || Ok(vec![touch(&file)])).unwrap();
        assert!(cache.events()[1].ran);
    }

    #[test]
    fn corrupt_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{").unwrap();
        assert!(matches!(Cache::open(dir.path(), false), Err(Error::Corrupt { .. })));
    }
}
