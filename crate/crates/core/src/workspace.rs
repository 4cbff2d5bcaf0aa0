use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::structured::canonical_text;

pub const CONFIG_FILE: &str = "config.yaml";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkspaceError {
    #[error("invalid workspace path {0:?}")]
    InvalidPath(String),
}

/// The generated code artifact: named text files plus `config.yaml`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub files: BTreeMap<String, String>,
    pub config_doc: String,
}

/// Normalize a relative path; rejects absolute paths and `..` components.
pub fn validate_path(path: &str) -> Result<String, WorkspaceError> {
    let p = path.trim().replace('\\', "/");
    let p = p.trim_start_matches("./");
    let bad = p.is_empty()
        || p.starts_with('/')
        || p.contains(':')
        || p.split('/').any(|c| c.is_empty() || c == "." || c == "..");
    if bad {
        return Err(WorkspaceError::InvalidPath(path.to_string()));
    }
    Ok(p.to_string())
}

pub fn fence_language(path: &str) -> &'static str {
    match path.rsplit('.').next().unwrap_or("") {
        "py" => "python",
        "yaml" | "yml" => "yaml",
        "json" => "json",
        "sh" => "bash",
        "md" => "markdown",
        "toml" => "toml",
        _ => "",
    }
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: &str, content: &str) -> Result<String, WorkspaceError> {
        let path = validate_path(path)?;
        if path == CONFIG_FILE {
            self.config_doc = canonical_text(content);
        } else {
            self.files.insert(path.clone(), canonical_text(content));
        }
        Ok(path)
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        if path == CONFIG_FILE {
            return Some(&self.config_doc);
        }
        self.files.get(path).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty() && self.config_doc.trim().is_empty()
    }

    /// Code file paths followed by `config.yaml`.
    pub fn all_paths(&self) -> Vec<String> {
        let mut paths: Vec<String> = self.files.keys().cloned().collect();
        paths.push(CONFIG_FILE.to_string());
        paths
    }

    /// Every file as a `## Code: <path>` heading with a fenced block.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for path in self.all_paths() {
            let content = self.get(&path).unwrap_or_default();
            out.push_str(&format!(
                "## Code: {path}\n```{}\n{}```\n\n",
                fence_language(&path),
                content
            ));
        }
        out
    }

    /// Paths whose content differs between `self` and `other`, including files
    /// present on only one side.
    pub fn changed_paths(&self, other: &Workspace) -> Vec<String> {
        let mut changed: Vec<String> = self
            .files
            .keys()
            .chain(other.files.keys())
            .filter(|p| self.files.get(*p) != other.files.get(*p))
            .cloned()
            .collect();
        changed.sort();
        changed.dedup();
        if self.config_doc != other.config_doc {
            changed.push(CONFIG_FILE.to_string());
        }
        changed
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        if dir.exists() {
            std::fs::remove_dir_all(dir)?;
        }
        std::fs::create_dir_all(dir)?;
        for (path, content) in &self.files {
            let target = dir.join(path);
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(target, content)?;
        }
        std::fs::write(dir.join(CONFIG_FILE), &self.config_doc)
    }

    pub fn read_from(dir: &Path) -> std::io::Result<Self> {
        fn walk(root: &Path, dir: &Path, ws: &mut Workspace) -> std::io::Result<()> {
            let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
            entries.sort_by_key(|e| e.file_name());
            for entry in entries {
                let path = entry.path();
                if path.is_dir() {
                    walk(root, &path, ws)?;
                    continue;
                }
                let rel = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .to_string_lossy()
                    .replace('\\', "/");
                let content = std::fs::read_to_string(&path)?;
                ws.insert(&rel, &content).map_err(|e| {
                    std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
                })?;
            }
            Ok(())
        }
        let mut ws = Workspace::new();
        walk(dir, dir, &mut ws)?;
        Ok(ws)
    }
}
