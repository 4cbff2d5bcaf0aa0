//! Run-directory artifact I/O with content hashes.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline; stable for equal values.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Clone)]
pub struct ArtifactDir {
    root: PathBuf,
}

impl ArtifactDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
        move |source| ArtifactError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Write bytes and return their sha256.
    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<String, ArtifactError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(Self::io(parent))?;
        }
        std::fs::write(&path, bytes).map_err(Self::io(&path))?;
        Ok(sha256_hex(bytes))
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<String, ArtifactError> {
        self.write_bytes(rel, &to_json_bytes(value))
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<String, ArtifactError> {
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, ArtifactError> {
        let path = self.path(rel);
        let bytes = std::fs::read(&path).map_err(Self::io(&path))?;
        serde_json::from_slice(&bytes).map_err(|source| ArtifactError::Json { path, source })
    }

    pub fn read_text(&self, rel: &str) -> Result<String, ArtifactError> {
        let path = self.path(rel);
        std::fs::read_to_string(&path).map_err(Self::io(&path))
    }

    /// Replace directory `rel` with the workspace files; returns the tree hash.
    pub fn write_workspace(
        &self,
        rel: &str,
        ws: &crate::Workspace,
    ) -> Result<String, ArtifactError> {
        let path = self.path(rel);
        ws.write_to(&path).map_err(Self::io(&path))?;
        hash_path(&path)
    }

    pub fn read_workspace(&self, rel: &str) -> Result<crate::Workspace, ArtifactError> {
        let path = self.path(rel);
        crate::Workspace::read_from(&path).map_err(Self::io(&path))
    }

    /// sha256 of a file, or of a directory tree (sorted relative paths and
    /// file hashes).
    pub fn hash(&self, rel: &str) -> Result<String, ArtifactError> {
        hash_path(&self.path(rel))
    }
}

pub fn hash_path(path: &Path) -> Result<String, ArtifactError> {
    let io = |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    if path.is_dir() {
        let mut listing = Vec::new();
        collect(path, path, &mut listing)?;
        listing.sort();
        Ok(sha256_hex(listing.join("\n").as_bytes()))
    } else {
        let bytes = std::fs::read(path).map_err(io)?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), ArtifactError> {
    let io = |source| ArtifactError::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        let p = entry.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else {
            let rel = p
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/");
            out.push(format!("{rel} {}", hash_path(&p)?));
        }
    }
    Ok(())
}
