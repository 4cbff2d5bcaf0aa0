//! Append-only JSON-lines transcript store (`transcripts.jsonl`).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatResponse, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Chat {
        key: String,
        purpose: Purpose,
        model: String,
        response: ChatResponse,
    },
    Embed {
        key: String,
        model: String,
        vector: Vec<f64>,
    },
}

impl TranscriptEntry {
    pub fn key(&self) -> &str {
        match self {
            TranscriptEntry::Chat { key, .. } | TranscriptEntry::Embed { key, .. } => key,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("transcript file {0} does not exist")]
    Missing(PathBuf),
    #[error("transcript I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed transcript line {line} in {path}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub struct TranscriptStore {
    path: PathBuf,
    entries: Mutex<HashMap<String, TranscriptEntry>>,
    writer: Option<Mutex<File>>,
}

impl std::fmt::Debug for TranscriptStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TranscriptStore")
            .field("path", &self.path)
            .field("writable", &self.writer.is_some())
            .finish()
    }
}

fn read_entries(path: &Path) -> Result<HashMap<String, TranscriptEntry>, StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut entries = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry =
            serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
        // first occurrence wins; later duplicates are ignored
        entries.entry(entry.key().to_string()).or_insert(entry);
    }
    Ok(entries)
}

impl TranscriptStore {
    /// Read-only store for replay; the file must exist.
    pub fn open_replay(path: &Path) -> Result<Self, StoreError> {
        if !path.is_file() {
            return Err(StoreError::Missing(path.to_path_buf()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries: Mutex::new(read_entries(path)?),
            writer: None,
        })
    }

    /// Appending store for record mode. Existing entries are loaded so that a
    /// resumed recording reuses them instead of writing duplicate keys.
    pub fn open_record(path: &Path) -> Result<Self, StoreError> {
        let entries = if path.is_file() {
            read_entries(path)?
        } else {
            HashMap::new()
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| StoreError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| StoreError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            writer: Some(Mutex::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<TranscriptEntry> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn append(&self, entry: TranscriptEntry) -> Result<(), StoreError> {
        let Some(writer) = &self.writer else {
            return Ok(());
        };
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(entry.key()) {
            return Ok(());
        }
        let line = serde_json::to_string(&entry).expect("transcript entry serializes");
        let mut file = writer.lock().unwrap();
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        entries.insert(entry.key().to_string(), entry);
        Ok(())
    }
}
