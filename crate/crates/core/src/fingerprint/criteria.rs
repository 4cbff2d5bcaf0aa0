use serde_json::Value;
use thiserror::Error;

use super::{prompts, Criterion, GuideUnit};
use crate::gateway::structured::extract_json_list;
use crate::gateway::{AskError, Gateway, GatewayError, Purpose};
use crate::paper::PaperDoc;
use crate::{Warning, MAX_REPROMPTS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("no <fact> span")]
    MissingFact,
    #[error("empty <fact> span")]
    EmptyFact,
    #[error("{0} <fact> spans, expected one")]
    MultipleFacts(usize),
    #[error("{0} <scope> spans, expected at most one")]
    MultipleScopes(usize),
    #[error("nested <{0}> span")]
    Nested(&'static str),
    #[error("unbalanced <{0}> tag")]
    Unbalanced(&'static str),
}

const TAGS: [(&str, &str, bool); 4] = [
    ("<fact>", "fact", true),
    ("</fact>", "fact", false),
    ("<scope>", "scope", true),
    ("</scope>", "scope", false),
];

/// Split a rendered criterion into its fact and optional scope, keeping the
/// inner text verbatim.
pub fn parse_fact_scope(rendered: &str) -> Result<(String, Option<String>), SpanError> {
    let mut facts: Vec<&str> = Vec::new();
    let mut scopes: Vec<&str> = Vec::new();
    let mut open: Option<(&'static str, usize)> = None;
    let mut pos = 0usize;

    while pos < rendered.len() {
        let rest = &rendered[pos..];
        let Some(lt) = rest.find('<') else { break };
        let at = pos + lt;
        let tail = &rendered[at..];
        let Some(&(tag, name, opening)) = TAGS.iter().find(|(t, _, _)| tail.starts_with(t)) else {
            pos = at + 1;
            continue;
        };
        match (open, opening) {
            (Some(_), true) => return Err(SpanError::Nested(name)),
            (None, true) => open = Some((name, at + tag.len())),
            (Some((open_name, start)), false) if open_name == name => {
                let inner = &rendered[start..at];
                if name == "fact" {
                    facts.push(inner);
                } else {
                    scopes.push(inner);
                }
                open = None;
            }
            (_, false) => return Err(SpanError::Unbalanced(name)),
        }
        pos = at + tag.len();
    }
    if let Some((name, _)) = open {
        return Err(SpanError::Unbalanced(name));
    }
    match facts.len() {
        0 => return Err(SpanError::MissingFact),
        1 => {}
        n => return Err(SpanError::MultipleFacts(n)),
    }
    if scopes.len() > 1 {
        return Err(SpanError::MultipleScopes(scopes.len()));
    }
    if facts[0].trim().is_empty() {
        return Err(SpanError::EmptyFact);
    }
    Ok((facts[0].to_string(), scopes.first().map(|s| s.to_string())))
}

/// Minimal rendering for a (fact, scope) pair.
pub fn render_fact_scope(fact: &str, scope: Option<&str>) -> String {
    match scope {
        Some(s) => format!("<fact>{fact}</fact> <scope>{s}</scope>"),
        None => format!("<fact>{fact}</fact>"),
    }
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_key(text: &str) -> String {
    let stripped: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_strings(reply: &str) -> Result<Vec<Value>, String> {
    extract_json_list(reply).map_err(|e| e.reason)
}

/// Decompose one guide unit into atomic criteria. Malformed entries are
/// dropped with a warning; an unparseable reply skips the unit.
pub fn standardize(
    unit: &GuideUnit,
    doc: &PaperDoc,
    gw: &Gateway,
) -> Result<(Vec<Criterion>, Vec<Warning>), GatewayError> {
    let reference = unit
        .source
        .as_ref()
        .map(|s| s.text(doc))
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| "(not available)".to_string());
    let req = gw
        .request(Purpose::Standardize)
        .system(prompts::STANDARDIZE_SYSTEM)
        .user(format!(
            "Summary Fact: \"{}\"\nReference Sentence: \"{}\"",
            unit.text, reference
        ));
    let mut warnings = Vec::new();
    let entries = match gw.ask(req, MAX_REPROMPTS, criterion_strings) {
        Ok(a) => a.value,
        Err(AskError::Gateway(e)) => return Err(e),
        Err(AskError::Unparseable { reason, .. }) => {
            warnings.push(Warning::new(
                "fingerprint",
                "standardize_unparseable",
                format!("unit {} skipped: {reason}", unit.id),
            ));
            return Ok((Vec::new(), warnings));
        }
    };

    let mut criteria = Vec::new();
    for (n, entry) in entries.iter().enumerate() {
        let text = match entry {
            Value::String(s) => Some(s.as_str()),
            Value::Object(o) => o.get("criterion").and_then(Value::as_str),
            _ => None,
        };
        let Some(text) = text.map(str::trim).filter(|t| !t.is_empty()) else {
            warnings.push(Warning::new(
                "fingerprint",
                "criterion_rejected",
                format!("unit {} entry {}: no \"criterion\" string", unit.id, n + 1),
            ));
            continue;
        };
        match parse_fact_scope(text) {
            Ok((fact, scope)) => criteria.push(Criterion {
                id: String::new(),
                fact,
                scope,
                rendered: text.to_string(),
                origin_guide_id: unit.id.clone(),
                source: unit.source.clone(),
            }),
            Err(e) => warnings.push(Warning::new(
                "fingerprint",
                "criterion_rejected",
                format!("unit {} entry {}: {e}", unit.id, n + 1),
            )),
        }
    }
    Ok((criteria, warnings))
}
