//! Run directories: a lock file, a manifest of every artifact with its
//! content hash, and overwrite protection.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use doccontrast::persist::{read_json, sha256_file, write_json};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Stage};

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Config hashes of the upstream stages this run read.
    pub upstream: BTreeMap<String, String>,
    pub artifacts: Vec<ArtifactRecord>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub versions: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

/// Exclusive handle on a run directory for one stage.
pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
    manifest: RunManifest,
    written: Vec<PathBuf>,
    started: Instant,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let lock = root.join(LOCK);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => {
                    let owner = std::fs::read_to_string(&lock).unwrap_or_default();
                    anyhow!("run directory {} is locked by process {}", root.display(), owner.trim())
                }
                _ => anyhow!("creating lock {}: {e}", lock.display()),
            })?;
        writeln!(f, "{}", std::process::id())?;
        let path = root.join(MANIFEST);
        let manifest = if path.exists() {
            read_json(&path).with_context(|| format!("reading {}", path.display()))?
        } else {
            RunManifest::default()
        };
        Ok(Self { root: root.to_path_buf(), lock, manifest, written: Vec::new(), started: Instant::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Refuse to clobber a completed stage or any of `outputs` unless forced;
    /// with `force`, remove the previous stage's artifacts first.
    pub fn claim(&mut self, stage: Stage, outputs: &[&str], force: bool) -> Result<()> {
        let previous = self.manifest.stages.get(stage.name()).cloned();
        let existing: Vec<&str> = outputs.iter().copied().filter(|o| self.path(o).exists()).collect();
        if !force && (previous.is_some() || !existing.is_empty()) {
            let what = if existing.is_empty() { "a recorded run".to_string() } else { existing.join(", ") };
            bail!("{} already has {what} in {}; pass --force to overwrite", stage.name(), self.root.display());
        }
        if let Some(prev) = previous {
            for a in &prev.artifacts {
                let p = self.path(&a.path);
                if p.exists() {
                    std::fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
                }
            }
            self.manifest.stages.remove(stage.name());
        }
        for o in existing {
            let p = self.path(o);
            if p.is_file() {
                std::fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
            }
        }
        Ok(())
    }

    /// Check that each upstream stage ran with the same config and that its
    /// artifacts are unchanged on disk.
    pub fn require_upstream(&self, cfg: &ExperimentConfig, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for &up in stage.upstream(cfg) {
            let rec = self.manifest.stages.get(up.name()).ok_or_else(|| {
                anyhow!("missing artifact: `{}` needs the outputs of `{}` in {}", stage.name(), up.name(), self.root.display())
            })?;
            let expected = cfg.stage_hash(up);
            if rec.config_hash != expected {
                bail!(
                    "config hash mismatch: `{}` was run with {} but the current config gives {}",
                    up.name(),
                    &rec.config_hash[..12],
                    &expected[..12]
                );
            }
            for a in &rec.artifacts {
                let p = self.path(&a.path);
                if !p.exists() {
                    bail!("missing artifact {} (recorded by `{}`)", p.display(), up.name());
                }
                if sha256_file(&p)? != a.sha256 {
                    bail!("artifact {} changed since `{}` recorded it", p.display(), up.name());
                }
            }
            out.insert(up.name().to_string(), rec.config_hash.clone());
        }
        Ok(out)
    }

    pub fn record(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.written.push(PathBuf::from(name));
        p
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.record(name);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let p = self.record(name);
        Ok(write_json(&p, value)?)
    }

    /// Hash everything written by this stage into the manifest.
    pub fn finish(&mut self, cfg: &ExperimentConfig, stage: Stage, upstream: BTreeMap<String, String>) -> Result<()> {
        let mut artifacts = Vec::with_capacity(self.written.len());
        self.written.sort();
        self.written.dedup();
        for rel in &self.written {
            let p = self.root.join(rel);
            artifacts.push(ArtifactRecord {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(&p)?,
                bytes: std::fs::metadata(&p)?.len(),
            });
        }
        let rec = StageRecord {
            config_hash: cfg.stage_hash(stage),
            seed: cfg.seed,
            upstream,
            artifacts,
            seconds: self.started.elapsed().as_secs_f64(),
        };
        self.manifest.versions.insert("doccontrast".into(), doccontrast::VERSION.into());
        self.manifest.versions.insert("doccontrast-cli".into(), env!("CARGO_PKG_VERSION").into());
        self.manifest.stages.insert(stage.name().to_string(), rec);
        Ok(write_json(&self.root.join(MANIFEST), &self.manifest)?)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}
