//! Pulling structured values out of free-form model replies.
//!
//! Models wrap JSON in prose and fences, so every extractor walks a list of
//! candidates (the whole reply, fenced blocks, balanced bracket spans) and
//! takes the first one that is well-formed for the requested kind.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuredKind {
    IntArray,
    JsonList,
    JsonObject,
    PlanDocument,
    CodeFiles,
}

impl std::fmt::Display for StructuredKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StructuredKind::IntArray => "integer array",
            StructuredKind::JsonList => "JSON list",
            StructuredKind::JsonObject => "JSON object",
            StructuredKind::PlanDocument => "plan document",
            StructuredKind::CodeFiles => "code files",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no well-formed {kind} in model output: {reason}")]
pub struct ParseFailure {
    pub kind: StructuredKind,
    pub reason: String,
    pub raw: String,
}

impl ParseFailure {
    fn new(kind: StructuredKind, reason: impl Into<String>, raw: &str) -> Self {
        Self {
            kind,
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePlan {
    pub path: String,
    pub steps: Vec<String>,
}

/// A revision plan: ordered config edits plus ordered per-file steps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub config_steps: Vec<String>,
    pub file_plans: Vec<FilePlan>,
}

impl PlanDocument {
    pub fn is_empty(&self) -> bool {
        self.config_steps.is_empty() && self.file_plans.iter().all(|f| f.steps.is_empty())
    }

    /// Append another plan, merging steps for files already present.
    pub fn merge(&mut self, other: PlanDocument) {
        self.config_steps.extend(other.config_steps);
        for fp in other.file_plans {
            match self.file_plans.iter_mut().find(|p| p.path == fp.path) {
                Some(existing) => existing.steps.extend(fp.steps),
                None => self.file_plans.push(fp),
            }
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("### CONFIG_PLAN\n\n");
        if self.config_steps.is_empty() {
            out.push_str("No changes needed for config.yaml\n");
        }
        for (i, step) in self.config_steps.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, step));
        }
        out.push_str("\n### CODE_PLAN\n");
        for fp in &self.file_plans {
            out.push_str(&format!("\n## Code: {}\n", fp.path));
            for (i, step) in fp.steps.iter().enumerate() {
                out.push_str(&format!("{}. {}\n", i + 1, step));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFile {
    pub path: String,
    pub language: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structured {
    IntArray(Vec<i64>),
    JsonList(Vec<Value>),
    JsonObject(Map<String, Value>),
    Plan(PlanDocument),
    CodeFiles(Vec<CodeFile>),
}

pub fn extract_structured(text: &str, kind: StructuredKind) -> Result<Structured, ParseFailure> {
    match kind {
        StructuredKind::IntArray => extract_int_array(text).map(Structured::IntArray),
        StructuredKind::JsonList => extract_json_list(text).map(Structured::JsonList),
        StructuredKind::JsonObject => extract_json_object(text).map(Structured::JsonObject),
        StructuredKind::PlanDocument => parse_plan_document(text).map(Structured::Plan),
        StructuredKind::CodeFiles => parse_code_files(text).map(Structured::CodeFiles),
    }
}

pub fn extract_int_array(text: &str) -> Result<Vec<i64>, ParseFailure> {
    first_json(text, StructuredKind::IntArray, |v| {
        let arr = v.as_array()?;
        arr.iter().map(Value::as_i64).collect::<Option<Vec<_>>>()
    })
}

pub fn extract_json_list(text: &str) -> Result<Vec<Value>, ParseFailure> {
    first_json(text, StructuredKind::JsonList, |v| v.as_array().cloned())
}

pub fn extract_json_object(text: &str) -> Result<Map<String, Value>, ParseFailure> {
    first_json(text, StructuredKind::JsonObject, |v| v.as_object().cloned())
}

fn first_json<T>(
    text: &str,
    kind: StructuredKind,
    accept: impl Fn(&Value) -> Option<T>,
) -> Result<T, ParseFailure> {
    if text.trim().is_empty() {
        return Err(ParseFailure::new(kind, "empty response", text));
    }
    let mut saw_json = false;
    for candidate in json_candidates(text) {
        if let Ok(value) = serde_json::from_str::<Value>(candidate.trim()) {
            saw_json = true;
            if let Some(out) = accept(&value) {
                return Ok(out);
            }
        }
    }
    let reason = if saw_json {
        "JSON found but not of the expected shape"
    } else {
        "no parseable JSON"
    };
    Err(ParseFailure::new(kind, reason, text))
}

fn json_candidates(text: &str) -> impl Iterator<Item = &str> {
    let whole = std::iter::once(text.trim());
    let fenced = fenced_blocks(text).into_iter().map(|b| b.body);
    let balanced = text
        .char_indices()
        .filter(|(_, c)| *c == '[' || *c == '{')
        .filter_map(move |(i, _)| balanced_end(text, i).map(|end| &text[i..end]));
    whole.chain(fenced).chain(balanced)
}

/// End (exclusive) of the bracketed span opening at `start`, string-aware.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut stack: Vec<u8> = Vec::new();
    let mut in_string = false;
    let mut escape = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escape {
                escape = false;
            } else if b == b'\\' {
                escape = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' => stack.push(b']'),
            b'{' => stack.push(b'}'),
            b']' | b'}' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

struct Fence<'a> {
    language: &'a str,
    body: &'a str,
    /// byte offset of the opening fence line
    start: usize,
    /// byte offset just past the closing fence line
    end: usize,
}

fn fenced_blocks(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    let mut open: Option<(usize, usize, &str, usize)> = None; // (start, body_start, lang, ticks)
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        let ticks = trimmed.chars().take_while(|&c| c == '`').count();
        match open {
            None if ticks >= 3 => {
                let lang = trimmed[ticks..].trim();
                open = Some((offset, offset + line.len(), lang, ticks));
            }
            Some((start, body_start, lang, n)) if ticks >= n && trimmed.len() == ticks => {
                out.push(Fence {
                    language: lang,
                    body: &text[body_start..offset],
                    start,
                    end: offset + line.len(),
                });
                open = None;
            }
            _ => {}
        }
        offset += line.len();
    }
    out
}

/// Canonical file text: trailing newlines collapsed to exactly one.
pub fn canonical_text(text: &str) -> String {
    let body = text.trim_end_matches(['\n', '\r']);
    if body.is_empty() {
        String::new()
    } else {
        format!("{body}\n")
    }
}

/// The body of the first fenced block, or the whole reply when unfenced.
pub fn first_code_block(text: &str) -> String {
    match fenced_blocks(text).into_iter().next() {
        Some(f) => canonical_text(f.body),
        None => canonical_text(text.trim()),
    }
}

static CODE_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[ \t]*#{1,6}[ \t]*code[ \t]*:[ \t]*(.+?)[ \t]*$").unwrap());

fn clean_filename(raw: &str) -> String {
    raw.trim()
        .trim_matches(|c: char| {
            matches!(c, '[' | ']' | '`' | '*' | '"' | '\'') || c.is_whitespace()
        })
        .to_string()
}

/// Parse `## Code: [filename]` headings each followed by a fenced block.
pub fn parse_code_files(text: &str) -> Result<Vec<CodeFile>, ParseFailure> {
    let fences = fenced_blocks(text);
    let headings: Vec<(usize, usize, String)> = CODE_HEADING
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), clean_filename(&c[1]))
        })
        .collect();
    let mut files = Vec::new();
    for (i, (_, heading_end, name)) in headings.iter().enumerate() {
        if name.is_empty() {
            continue;
        }
        let next_heading = headings.get(i + 1).map_or(text.len(), |h| h.0);
        // headings that appear inside a fence belong to the file content
        if fences
            .iter()
            .any(|f| f.start < *heading_end && *heading_end <= f.end)
        {
            continue;
        }
        if let Some(f) = fences
            .iter()
            .find(|f| f.start >= *heading_end && f.start < next_heading)
        {
            files.push(CodeFile {
                path: name.clone(),
                language: f.language.to_string(),
                content: canonical_text(f.body),
            });
        }
    }
    if files.is_empty() {
        return Err(ParseFailure::new(
            StructuredKind::CodeFiles,
            "no `## Code: <file>` heading followed by a fenced block",
            text,
        ));
    }
    Ok(files)
}

static STEP_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d+[.)]|[-*\u{2022}])\s+(.*)$").unwrap());

fn section_name(line: &str) -> Option<&'static str> {
    let t = line.trim();
    if !(t.starts_with('#') || t.starts_with('*')) {
        return None;
    }
    let name = t
        .trim_matches(|c: char| c == '#' || c == '*' || c == ':' || c.is_whitespace())
        .to_uppercase()
        .replace(' ', "_");
    match name.as_str() {
        "CONFIG_PLAN" => Some("config"),
        "CODE_PLAN" => Some("code"),
        _ => None,
    }
}

fn push_step_line(steps: &mut Vec<String>, line: &str) {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') || t.starts_with("```") {
        return;
    }
    if let Some(c) = STEP_START.captures(line) {
        let step = c[1].trim();
        if !step.is_empty() {
            steps.push(step.to_string());
        }
        return;
    }
    if t.to_lowercase().starts_with("no change") {
        return;
    }
    match steps.last_mut() {
        Some(last) => {
            last.push(' ');
            last.push_str(t);
        }
        None => steps.push(t.to_string()),
    }
}

/// Parse a planner reply organized under `### CONFIG_PLAN` and `### CODE_PLAN`.
pub fn parse_plan_document(text: &str) -> Result<PlanDocument, ParseFailure> {
    let lines: Vec<&str> = text.lines().collect();
    let config_at = lines.iter().position(|l| section_name(l) == Some("config"));
    let code_at = lines.iter().position(|l| section_name(l) == Some("code"));
    let (Some(config_at), Some(code_at)) = (config_at, code_at) else {
        let missing = if config_at.is_none() {
            "### CONFIG_PLAN"
        } else {
            "### CODE_PLAN"
        };
        return Err(ParseFailure::new(
            StructuredKind::PlanDocument,
            format!("missing `{missing}` heading"),
            text,
        ));
    };

    let config_end = if code_at > config_at {
        code_at
    } else {
        lines.len()
    };
    let mut plan = PlanDocument::default();
    for line in &lines[config_at + 1..config_end] {
        push_step_line(&mut plan.config_steps, line);
    }

    let code_end = if config_at > code_at {
        config_at
    } else {
        lines.len()
    };
    let mut current: Option<FilePlan> = None;
    for line in &lines[code_at + 1..code_end] {
        if let Some(c) = CODE_HEADING.captures(line) {
            if let Some(fp) = current.take() {
                plan.merge(PlanDocument {
                    config_steps: Vec::new(),
                    file_plans: vec![fp],
                });
            }
            let path = clean_filename(&c[1]);
            current = (!path.is_empty()).then(|| FilePlan {
                path,
                steps: Vec::new(),
            });
            continue;
        }
        if let Some(fp) = current.as_mut() {
            push_step_line(&mut fp.steps, line);
        }
    }
    if let Some(fp) = current.take() {
        plan.merge(PlanDocument {
            config_steps: Vec::new(),
            file_plans: vec![fp],
        });
    }
    plan.file_plans.retain(|f| !f.steps.is_empty());
    Ok(plan)
}
