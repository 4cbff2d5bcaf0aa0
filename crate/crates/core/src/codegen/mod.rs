//! Initial implementation: a structure-only skeleton, then one fill turn per
//! stubbed class or function.

pub mod prompts;
pub mod pysrc;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::artifacts::ArtifactDir;
use crate::fingerprint::{GuideLevel, GuideUnit};
use crate::gateway::structured::first_code_block;
use crate::gateway::{AskError, Gateway, Purpose};
use crate::paper::PaperDoc;
use crate::workspace::Workspace;
use crate::{StageError, MAX_REPROMPTS};
use pysrc::{top_level_blocks, Block, BlockKind};

pub const MAIN_FILE: &str = "main.py";
pub const MANDATED_CLASSES: [&str; 4] = ["Data", "Model", "Trainer", "Evaluator"];
const FILL_ORDER: [&str; 5] = ["Data", "Model", "Trainer", "Evaluator", "main"];
const PLACEHOLDERS: [&str; 3] = ["todo", "dummy implementation", "your implementation"];

pub const WORKSPACE_ITER0: &str = "workspace_iter0";
pub const FILL_LOG_FILE: &str = "fill_log.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyState {
    Stub,
    Filled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillTarget {
    pub file: String,
    pub symbol: String,
    pub kind: BlockKind,
    pub body_state: BodyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillStatus {
    Filled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillRecord {
    pub file: String,
    pub symbol: String,
    pub kind: BlockKind,
    pub status: FillStatus,
    pub reprompts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodegenConfig {
    /// characters of paper text included in fill prompts
    pub paper_context_chars: usize,
}

impl Default for CodegenConfig {
    fn default() -> Self {
        Self {
            paper_context_chars: 24_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodegenRun {
    pub workspace: Workspace,
    pub fill_log: Vec<FillRecord>,
}

/// Why a skeleton was rejected, phrased for the re-prompt.
pub fn validate_skeleton(src: &str) -> Result<(), String> {
    let blocks = top_level_blocks(src);
    let has = |name: &str, kind: BlockKind| blocks.iter().any(|b| b.name == name && b.kind == kind);
    let mut missing: Vec<String> = MANDATED_CLASSES
        .iter()
        .filter(|c| !has(c, BlockKind::Class))
        .map(|c| format!("class {c}"))
        .collect();
    if !has("main", BlockKind::Function) {
        missing.push("function main()".into());
    }
    if !missing.is_empty() {
        return Err(format!("the skeleton is missing {}", missing.join(", ")));
    }
    if let Some(name) = blocks.iter().find_map(Block::first_implemented) {
        return Err(format!(
            "`{name}` has an implemented body; bodies must hold only a docstring and `pass`"
        ));
    }
    for body in pysrc::main_guards(src) {
        if !body.contains("main(") {
            return Err("the `if __name__ == \"__main__\":` guard must call main()".into());
        }
    }
    Ok(())
}

/// `config.yaml` text from configuration-level guides.
pub fn synthesize_config(guides: &[GuideUnit]) -> String {
    let mut out = String::from("# configuration values stated in the paper\n");
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut n = 0;
    for g in guides
        .iter()
        .filter(|g| g.level == GuideLevel::Configuration)
    {
        n += 1;
        let (name, value) = match g.text.split_once(" — ") {
            Some((name, value)) => (name.trim(), value.trim()),
            None => ("", g.text.trim()),
        };
        let mut slug: String = name
            .to_lowercase()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        slug = slug
            .split('_')
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        if slug.is_empty() || slug.starts_with(|c: char| c.is_ascii_digit()) {
            slug = format!("setting_{n}");
        }
        let mut key = slug.clone();
        let mut k = 2;
        while !used.insert(key.clone()) {
            key = format!("{slug}_{k}");
            k += 1;
        }
        let quoted = serde_json::to_string(value).unwrap_or_default();
        out.push_str(&format!("{key}: {quoted}\n"));
    }
    out
}

fn guide_summary(guides: &[GuideUnit]) -> (String, String) {
    let mut framework = String::new();
    for aspect in crate::fingerprint::Aspect::ALL {
        let items: Vec<&GuideUnit> = guides
            .iter()
            .filter(|g| g.level == GuideLevel::Framework && g.aspect == Some(aspect))
            .collect();
        framework.push_str(&format!("## {}\n", aspect.as_str()));
        if items.is_empty() {
            framework.push_str("(nothing stated)\n");
        }
        for g in items {
            framework.push_str(&format!("- {}\n", g.text));
        }
        framework.push('\n');
    }
    let configuration: String = guides
        .iter()
        .filter(|g| g.level == GuideLevel::Configuration)
        .map(|g| format!("- {}\n", g.text))
        .collect();
    (framework, configuration)
}

/// Ask for a structure-only script and validate it.
pub fn generate_skeleton(guides: &[GuideUnit], gw: &Gateway) -> Result<Workspace, StageError> {
    if guides.is_empty() {
        return Err(StageError::failed(
            "skeleton",
            "no framework or configuration guides",
        ));
    }
    let (framework, configuration) = guide_summary(guides);
    let req = gw
        .request(Purpose::Skeleton)
        .system(prompts::SKELETON_SYSTEM)
        .user(format!(
            "# Workflow summary\n\n{framework}# Configuration details\n\n{}",
            if configuration.is_empty() {
                "(none)\n".to_string()
            } else {
                configuration
            }
        ));
    let parse = |reply: &str| {
        let code = first_code_block(reply);
        validate_skeleton(&code).map(|_| code)
    };
    let skeleton = match gw.ask(req, MAX_REPROMPTS, parse) {
        Ok(a) => a.value,
        Err(AskError::Gateway(e)) => return Err(e.into()),
        Err(AskError::Unparseable {
            reason, attempts, ..
        }) => {
            return Err(StageError::failed(
                "skeleton",
                format!("{reason} (after {attempts} attempts)"),
            ))
        }
    };
    let mut ws = Workspace::new();
    ws.insert(MAIN_FILE, &skeleton).expect("constant path");
    ws.config_doc = synthesize_config(guides);
    Ok(ws)
}

fn fill_rank(name: &str) -> usize {
    FILL_ORDER
        .iter()
        .position(|n| *n == name)
        .unwrap_or(FILL_ORDER.len())
}

/// Stubbed top-level classes and functions: mandated names first, then the
/// rest in file order.
pub fn list_fill_targets(ws: &Workspace) -> Vec<FillTarget> {
    let mut found: Vec<(usize, usize, FillTarget)> = Vec::new();
    for (path, src) in ws.files.iter().filter(|(p, _)| p.ends_with(".py")) {
        for b in top_level_blocks(src).into_iter().filter(Block::is_stub) {
            found.push((
                fill_rank(&b.name),
                found.len(),
                FillTarget {
                    file: path.clone(),
                    symbol: b.name,
                    kind: b.kind,
                    body_state: BodyState::Stub,
                },
            ));
        }
    }
    found.sort_by_key(|(rank, seq, _)| (*rank, *seq));
    found.into_iter().map(|(_, _, t)| t).collect()
}

fn find_placeholder(code: &str) -> Option<&'static str> {
    let lower = code.to_lowercase();
    PLACEHOLDERS.into_iter().find(|p| lower.contains(p))
}

/// Splice a fill reply into the file: the target block is replaced, new
/// helper blocks go right before it and new imports join the import block.
fn merge_fill(src: &str, target: &FillTarget, reply: &str) -> Result<String, String> {
    if let Some(marker) = find_placeholder(reply) {
        return Err(format!(
            "the code contains the placeholder marker {marker:?}"
        ));
    }
    let reply_blocks = top_level_blocks(reply);
    let Some(new_block) = reply_blocks.iter().find(|b| b.name == target.symbol) else {
        return Err(format!("the reply does not define `{}`", target.symbol));
    };
    if new_block.kind != target.kind {
        return Err(format!(
            "`{}` changed between class and function",
            target.symbol
        ));
    }
    if new_block.is_stub() {
        return Err(format!("`{}` is still a stub", target.symbol));
    }
    let existing = pysrc::imports(src);
    let offered = pysrc::imports(reply);
    let restated: Vec<&String> = existing.intersection(&offered).collect();
    let dropped: Vec<&String> = existing.difference(&offered).collect();
    if !restated.is_empty() && !dropped.is_empty() {
        return Err(format!(
            "the reply rewrites the import block and drops existing imports: {}",
            dropped
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join("; ")
        ));
    }

    let src_lines: Vec<&str> = src.lines().collect();
    let reply_lines: Vec<&str> = reply.lines().collect();
    let blocks = top_level_blocks(src);
    let Some(old) = blocks.iter().find(|b| b.name == target.symbol) else {
        return Err(format!("`{}` is not in {}", target.symbol, target.file));
    };
    let helpers: Vec<String> = reply_blocks
        .iter()
        .filter(|b| b.name != target.symbol && !blocks.iter().any(|o| o.name == b.name))
        .map(|b| b.source(&reply_lines))
        .collect();

    let mut out: Vec<String> = Vec::new();
    let new_imports: Vec<&String> = offered.difference(&existing).collect();
    let import_at = pysrc::import_block_end(src).unwrap_or(0);
    for (i, line) in src_lines.iter().enumerate() {
        if i == import_at && !new_imports.is_empty() {
            out.extend(new_imports.iter().map(|s| s.to_string()));
            if import_at == 0 {
                out.push(String::new());
            }
        }
        if i == old.start {
            for h in &helpers {
                out.push(h.trim_end().to_string());
                out.push(String::new());
                out.push(String::new());
            }
            out.push(new_block.source(&reply_lines).trim_end().to_string());
        }
        if i < old.start || i >= old.end {
            out.push(line.to_string());
        }
    }
    if import_at >= src_lines.len() && !new_imports.is_empty() {
        out.extend(new_imports.iter().map(|s| s.to_string()));
    }
    let merged = out.join("\n") + "\n";
    debug_assert!(pysrc::imports(&merged).is_superset(&existing));
    Ok(merged)
}

/// Context shared by every fill turn.
pub struct FillContext<'a> {
    pub doc: &'a PaperDoc,
    pub guides: &'a [GuideUnit],
    pub cfg: &'a CodegenConfig,
}

/// One fill turn. A reply that cannot be merged is re-prompted; when it
/// still fails the workspace is returned unchanged with the error.
pub fn fill_target(
    ws: &Workspace,
    target: &FillTarget,
    ctx: &FillContext<'_>,
    gw: &Gateway,
) -> Result<(Workspace, FillRecord), StageError> {
    let record = |status, reprompts, error| FillRecord {
        file: target.file.clone(),
        symbol: target.symbol.clone(),
        kind: target.kind,
        status,
        reprompts,
        error,
    };
    let Some(src) = ws.files.get(&target.file) else {
        return Err(StageError::failed(
            "fill",
            format!("{} is not in the workspace", target.file),
        ));
    };
    let lines: Vec<&str> = src.lines().collect();
    let Some(block) = top_level_blocks(src)
        .into_iter()
        .find(|b| b.name == target.symbol)
    else {
        return Err(StageError::failed(
            "fill",
            format!("`{}` is not in {}", target.symbol, target.file),
        ));
    };
    let imported: Vec<String> = pysrc::imports(src).into_iter().collect();
    let (_, configuration) = guide_summary(ctx.guides);
    let kind = match target.kind {
        BlockKind::Class => "class",
        BlockKind::Function => "function",
    };
    let prompt = format!(
        "# Paper\n\n{}\n\n# Configuration details\n\n{}\n# config.yaml\n\n```yaml\n{}```\n\n\
         # Code framework ({})\n\n```python\n{}```\n\n# Already imported\n\n{}\n\n\
         # Target part\n\nTarget: {kind} `{}`\n\n```python\n{}```\n",
        ctx.doc.context_text(ctx.cfg.paper_context_chars),
        if configuration.is_empty() {
            "(none)\n".to_string()
        } else {
            configuration
        },
        ws.config_doc,
        target.file,
        src,
        if imported.is_empty() {
            "(none)".to_string()
        } else {
            imported.join("\n")
        },
        target.symbol,
        block.source(&lines),
    );
    let req = gw
        .request(Purpose::Fill)
        .system(prompts::FILL_SYSTEM)
        .user(prompt);
    match gw.ask(req, MAX_REPROMPTS, |reply| {
        merge_fill(src, target, &first_code_block(reply))
    }) {
        Ok(a) => {
            let mut next = ws.clone();
            next.insert(&target.file, &a.value)
                .map_err(|e| StageError::failed("fill", e.to_string()))?;
            Ok((next, record(FillStatus::Filled, a.reprompts, None)))
        }
        Err(AskError::Gateway(e)) => Err(e.into()),
        Err(AskError::Unparseable {
            reason, attempts, ..
        }) => {
            log::warn!("`{}` kept as a stub: {reason}", target.symbol);
            Ok((
                ws.clone(),
                record(FillStatus::Failed, attempts - 1, Some(reason)),
            ))
        }
    }
}

/// Skeleton then sequential fills. Writes `workspace_iter0/` and
/// `fill_log.json` when `out` is given.
pub fn generate_initial(
    doc: &PaperDoc,
    guides: &[GuideUnit],
    gw: &Gateway,
    cfg: &CodegenConfig,
    out: Option<&ArtifactDir>,
) -> Result<CodegenRun, StageError> {
    let guides: Vec<GuideUnit> = guides
        .iter()
        .filter(|g| g.level != GuideLevel::Exhaustive)
        .cloned()
        .collect();
    let mut ws = generate_skeleton(&guides, gw)?;
    let ctx = FillContext {
        doc,
        guides: &guides,
        cfg,
    };
    let mut fill_log = Vec::new();
    for target in list_fill_targets(&ws) {
        let (next, rec) = fill_target(&ws, &target, &ctx, gw)?;
        ws = next;
        fill_log.push(rec);
    }
    if let Some(dir) = out {
        dir.write_workspace(WORKSPACE_ITER0, &ws)?;
        dir.write_json(FILL_LOG_FILE, &fill_log)?;
    }
    Ok(CodegenRun {
        workspace: ws,
        fill_log,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::scripted::ScriptedBackend;
    use crate::gateway::{HashEmbedder, Mode};
    use crate::load_paper;

    pub(crate) const SKELETON: &str = r#"import torch  # tensors
import numpy as np


class Data:
    """Loads the dataset."""

    def __init__(self, root):
        """Args: root (str)."""
        pass

    def load(self):
        """Returns the splits."""
        pass


class Model:
    """Two-layer network."""

    def forward(self, x):
        """Forward pass."""
        pass


class Trainer:
    """Runs training."""

    def train(self):
        """Trains."""
        pass


class Evaluator:
    """Computes accuracy."""

    def evaluate(self):
        """Evaluates."""
        pass


def main():
    """Entry point."""
    pass


if __name__ == "__main__":
    main()
"#;

    fn fenced(code: &str) -> String {
        format!("```python\n{code}```")
    }

    fn gateway(b: Arc<ScriptedBackend>) -> Gateway {
        Gateway::builder(Mode::Live)
            .chat(b)
            .embedder(Arc::new(HashEmbedder::new(8)))
            .build()
    }

    fn guides() -> Vec<GuideUnit> {
        vec![
            GuideUnit {
                id: "fw-data-1".into(),
                level: GuideLevel::Framework,
                text: "Cora citation graph".into(),
                aspect: Some(crate::fingerprint::Aspect::Data),
                source: None,
                grounding_miss: false,
            },
            GuideUnit {
                id: "cfg-1".into(),
                level: GuideLevel::Configuration,
                text: "learning rate — 1e-4".into(),
                aspect: None,
                source: None,
                grounding_miss: false,
            },
        ]
    }

    #[test]
    fn compliant_skeleton_validates() {
        assert_eq!(validate_skeleton(SKELETON), Ok(()));
        let names: Vec<String> = top_level_blocks(SKELETON)
            .into_iter()
            .map(|b| b.name)
            .collect();
        assert_eq!(names, ["Data", "Model", "Trainer", "Evaluator", "main"]);
    }

    #[test]
    fn skeleton_rejections() {
        let no_eval = SKELETON.replace("class Evaluator:", "class Scorer:");
        assert!(validate_skeleton(&no_eval)
            .unwrap_err()
            .contains("class Evaluator"));
        let implemented = SKELETON.replace(
            "        \"\"\"Forward pass.\"\"\"\n        pass",
            "        \"\"\"Forward pass.\"\"\"\n        return x",
        );
        assert!(validate_skeleton(&implemented)
            .unwrap_err()
            .contains("Model.forward"));
        let bad_guard = SKELETON.replace("    main()\n", "    print('hi')\n");
        assert!(validate_skeleton(&bad_guard).unwrap_err().contains("guard"));
    }

    #[test]
    fn skeleton_missing_class_fails_after_reprompts() {
        let b = Arc::new(ScriptedBackend::new());
        let bad = fenced(&SKELETON.replace("class Evaluator:", "class Scorer:"));
        for _ in 0..3 {
            b.push(Purpose::Skeleton, bad.clone());
        }
        let err = generate_skeleton(&guides(), &gateway(b.clone())).unwrap_err();
        assert!(matches!(err, StageError::Failed { ref stage, .. } if stage == "skeleton"));
        assert_eq!(b.call_count(), 3);
    }

    #[test]
    fn skeleton_with_body_is_reprompted() {
        let b = Arc::new(ScriptedBackend::new());
        b.push(
            Purpose::Skeleton,
            fenced(&SKELETON.replace(
                "        \"\"\"Trains.\"\"\"\n        pass",
                "        return 1",
            )),
        );
        b.push(Purpose::Skeleton, fenced(SKELETON));
        let ws = generate_skeleton(&guides(), &gateway(b.clone())).unwrap();
        assert_eq!(b.call_count(), 2);
        assert_eq!(ws.get(MAIN_FILE), Some(SKELETON));
        assert_eq!(
            ws.config_doc,
            "# configuration values stated in the paper\nlearning_rate: \"1e-4\"\n"
        );
        let second = b.calls()[1].clone();
        assert_eq!(second.messages.len(), 4);
    }

    #[test]
    fn fill_target_order() {
        let mut ws = Workspace::new();
        let with_helper = SKELETON.replacen(
            "\n\nclass Data:",
            "\n\ndef seed_everything(seed):\n    \"\"\"Seeds.\"\"\"\n    pass\n\n\nclass Data:",
            1,
        );
        ws.insert(MAIN_FILE, &with_helper).unwrap();
        let names: Vec<String> = list_fill_targets(&ws)
            .into_iter()
            .map(|t| t.symbol)
            .collect();
        assert_eq!(
            names,
            [
                "Data",
                "Model",
                "Trainer",
                "Evaluator",
                "main",
                "seed_everything"
            ]
        );
        ws.insert(MAIN_FILE, SKELETON).unwrap();
        assert_eq!(list_fill_targets(&ws).len(), 5);
        let filled = "def main():\n    return 0\n";
        ws.insert(MAIN_FILE, filled).unwrap();
        assert!(list_fill_targets(&ws).is_empty());
    }

    fn target(symbol: &str, kind: BlockKind) -> FillTarget {
        FillTarget {
            file: MAIN_FILE.into(),
            symbol: symbol.into(),
            kind,
            body_state: BodyState::Stub,
        }
    }

    const DATA_FILL: &str = r#"import pandas as pd


class Data:
    """Loads the dataset."""

    def __init__(self, root):
        self.root = root

    def load(self):
        return pd.read_csv(self.root)
"#;

    #[test]
    fn fill_replaces_block_and_keeps_imports() {
        let merged = merge_fill(SKELETON, &target("Data", BlockKind::Class), DATA_FILL).unwrap();
        assert!(merged
            .starts_with("import torch  # tensors\nimport numpy as np\nimport pandas as pd\n"));
        assert!(merged.contains("return pd.read_csv(self.root)"));
        assert!(pysrc::imports(&merged).is_superset(&pysrc::imports(SKELETON)));
        let data = top_level_blocks(&merged)
            .into_iter()
            .find(|b| b.name == "Data")
            .unwrap();
        assert!(!data.is_stub());
        // the rest of the file is untouched
        assert!(merged.ends_with(&SKELETON[SKELETON.find("class Model:").unwrap()..]));
    }

    #[test]
    fn fill_guards() {
        let t = target("Data", BlockKind::Class);
        let dropped = format!(
            "import torch\n\n{}",
            &DATA_FILL["import pandas as pd\n\n".len()..]
        );
        assert!(merge_fill(SKELETON, &t, &dropped)
            .unwrap_err()
            .contains("import numpy as np"));
        let todo = DATA_FILL.replace("self.root = root", "self.root = root  # TODO cache");
        assert!(merge_fill(SKELETON, &t, &todo)
            .unwrap_err()
            .contains("todo"));
        let dummy = DATA_FILL.replace(
            "self.root = root",
            "self.root = root  # Dummy implementation",
        );
        assert!(merge_fill(SKELETON, &t, &dummy).is_err());
        assert!(merge_fill(SKELETON, &t, "def other():\n    return 1\n").is_err());
        let stub = "class Data:\n    pass\n";
        assert!(merge_fill(SKELETON, &t, stub).unwrap_err().contains("stub"));
    }

    #[test]
    fn fill_adds_new_helpers_before_target() {
        let reply = "def _norm(x):\n    return x / x.sum()\n\n\ndef main():\n    return _norm(np.ones(3))\n";
        let merged = merge_fill(SKELETON, &target("main", BlockKind::Function), reply).unwrap();
        let names: Vec<String> = top_level_blocks(&merged)
            .into_iter()
            .map(|b| b.name)
            .collect();
        assert_eq!(
            names,
            ["Data", "Model", "Trainer", "Evaluator", "_norm", "main"]
        );
    }

    #[test]
    fn generate_initial_fills_everything_or_records_failure() {
        let b = Arc::new(ScriptedBackend::new());
        b.push(Purpose::Skeleton, fenced(SKELETON));
        b.push(Purpose::Fill, fenced(DATA_FILL));
        for (name, body) in [
            ("Model", "forward(self, x):\n        return x"),
            ("Trainer", "train(self):\n        return 1"),
        ] {
            b.push(
                Purpose::Fill,
                fenced(&format!("class {name}:\n    def {body}\n")),
            );
        }
        for _ in 0..3 {
            b.push(
                Purpose::Fill,
                "class Evaluator:\n    def evaluate(self):\n        pass  # TODO\n",
            );
        }
        b.push(Purpose::Fill, fenced("def main():\n    Data('x').load()\n"));
        let doc = load_paper("We train a model.").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let art = ArtifactDir::new(dir.path());
        let run = generate_initial(
            &doc,
            &guides(),
            &gateway(b),
            &CodegenConfig::default(),
            Some(&art),
        )
        .unwrap();
        let status: Vec<(String, FillStatus)> = run
            .fill_log
            .iter()
            .map(|r| (r.symbol.clone(), r.status))
            .collect();
        assert_eq!(status[3], ("Evaluator".into(), FillStatus::Failed));
        assert_eq!(
            status.iter().filter(|s| s.1 == FillStatus::Filled).count(),
            4
        );
        assert_eq!(run.fill_log[3].reprompts, 2);
        let left: Vec<String> = list_fill_targets(&run.workspace)
            .into_iter()
            .map(|t| t.symbol)
            .collect();
        assert_eq!(left, ["Evaluator"]);
        assert!(art.path("workspace_iter0/main.py").exists());
        assert!(art.path("workspace_iter0/config.yaml").exists());
        assert!(art.exists(FILL_LOG_FILE));
    }

    #[test]
    fn config_synthesis() {
        let mut g = guides();
        g.push(GuideUnit {
            text: "learning rate — 2e-4 \"fine-tune\"".into(),
            ..g[1].clone()
        });
        g.push(GuideUnit {
            text: "uses 4 GPUs".into(),
            ..g[1].clone()
        });
        let yaml = synthesize_config(&g);
        assert!(yaml.contains("learning_rate: \"1e-4\"\n"));
        assert!(yaml.contains("learning_rate_2: \"2e-4 \\\"fine-tune\\\"\"\n"));
        assert!(yaml.contains("setting_3: \"uses 4 GPUs\"\n"));
    }
}
