//! Run directory bookkeeping: `manifest.json` and the `.lock` file.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use repro_core::artifacts::{hash_path, sha256_hex, ArtifactDir};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Hash of the inputs and settings a stage depends on.
pub fn digest(value: &Value) -> String {
    sha256_hex(value.to_string().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed_at: String,
    pub input_digest: String,
    /// artifact path relative to the run directory -> sha256
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub created_at: String,
    pub updated_at: String,
    pub config: Value,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config: Value) -> Self {
        let t = now();
        Self {
            created_at: t.clone(),
            updated_at: t,
            config,
            stages: BTreeMap::new(),
        }
    }

    pub fn load(dir: &ArtifactDir) -> Result<Option<Self>, CliError> {
        if !dir.exists(MANIFEST_FILE) {
            return Ok(None);
        }
        dir.read_json(MANIFEST_FILE)
            .map(Some)
            .map_err(|e| CliError::input(format!("unreadable run manifest: {e}")))
    }

    pub fn save(&mut self, dir: &ArtifactDir) -> Result<(), CliError> {
        self.updated_at = now();
        dir.write_json(MANIFEST_FILE, self)?;
        Ok(())
    }

    /// Complete when recorded with the same input digest and every artifact
    /// still hashes to its recorded value.
    pub fn is_complete(&self, stage: &str, input_digest: &str, dir: &ArtifactDir) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.input_digest == input_digest
            && rec
                .artifacts
                .iter()
                .all(|(rel, hash)| dir.exists(rel) && dir.hash(rel).is_ok_and(|h| &h == hash))
    }

    pub fn mark_complete(
        &mut self,
        stage: &str,
        input_digest: &str,
        artifacts: &[String],
        dir: &ArtifactDir,
    ) -> Result<(), CliError> {
        let mut hashes = BTreeMap::new();
        for rel in artifacts {
            hashes.insert(rel.clone(), dir.hash(rel)?);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                completed_at: now(),
                input_digest: input_digest.to_string(),
                artifacts: hashes,
            },
        );
        Ok(())
    }

    pub fn forget(&mut self, stage: &str) {
        self.stages.remove(stage);
    }

    /// Artifacts whose on-disk hash no longer matches the record.
    pub fn mismatches(&self, dir: &ArtifactDir) -> Vec<String> {
        self.stages
            .values()
            .flat_map(|r| r.artifacts.iter())
            .filter(|(rel, hash)| !dir.exists(rel) || dir.hash(rel).map_or(true, |h| &h != *hash))
            .map(|(rel, _)| rel.clone())
            .collect()
    }
}

/// Exclusive hold on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(run_dir).map_err(|e| {
            CliError::input(format!(
                "cannot create run directory {}: {e}",
                run_dir.display()
            ))
        })?;
        let path = run_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::input(format!(
                    "run directory {} is in use by another command (delete {} if none is running)",
                    run_dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(CliError::input(format!(
                "cannot lock {}: {e}",
                path.display()
            ))),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub fn file_hash(path: &Path) -> Result<String, CliError> {
    hash_path(path).map_err(|e| CliError::input(e.to_string()))
}
