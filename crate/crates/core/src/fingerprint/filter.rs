use serde_json::Value;

use super::{prompts, Criterion};
use crate::gateway::structured::extract_json_object;
use crate::gateway::{AskError, Gateway, GatewayError, Purpose};
use crate::{Warning, MAX_REPROMPTS};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// ascending 0-based positions into the cluster
    pub selected: Vec<usize>,
    pub reason: Option<String>,
    pub warnings: Vec<Warning>,
}

struct Selection {
    indices: Vec<i64>,
    reason: Option<String>,
}

fn parse_selection(reply: &str) -> Result<Selection, String> {
    let obj = extract_json_object(reply).map_err(|e| e.reason)?;
    let Some(Value::Array(items)) = obj.get("selected_indices") else {
        return Err("missing \"selected_indices\" array".into());
    };
    let indices = items
        .iter()
        .map(|v| v.as_i64().ok_or_else(|| format!("non-integer index {v}")))
        .collect::<Result<Vec<_>, _>>()?;
    let reason = obj.get("reason").and_then(Value::as_str).map(String::from);
    Ok(Selection { indices, reason })
}

/// Keep the smallest set of cluster members that covers its distinct
/// requirements, at most `cap` of them. Falls back to the first member.
pub fn semantic_filter(
    cluster: &[&Criterion],
    gw: &Gateway,
    cap: usize,
) -> Result<FilterOutcome, GatewayError> {
    let mut warnings = Vec::new();
    if cluster.len() <= 1 {
        return Ok(FilterOutcome {
            selected: (0..cluster.len()).collect(),
            reason: None,
            warnings,
        });
    }
    let listing: String = cluster
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}\n", i + 1, c.rendered))
        .collect();
    let req = gw
        .request(Purpose::Filter)
        .system(prompts::FILTER_SYSTEM)
        .user(format!("Criteria:\n{listing}"));
    let ids = cluster
        .iter()
        .map(|c| c.id.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    let fallback = |why: String, warnings: &mut Vec<Warning>| {
        warnings.push(Warning::new(
            "fingerprint",
            "filter_fallback",
            format!("cluster [{ids}]: {why}; keeping the first member"),
        ));
    };

    let selection = match gw.ask(req, MAX_REPROMPTS, parse_selection) {
        Ok(a) => a.value,
        Err(AskError::Gateway(e)) => return Err(e),
        Err(AskError::Unparseable { reason, .. }) => {
            fallback(format!("unparseable selection ({reason})"), &mut warnings);
            return Ok(FilterOutcome {
                selected: vec![0],
                reason: None,
                warnings,
            });
        }
    };

    let mut selected: Vec<usize> = Vec::new();
    for &n in &selection.indices {
        if n >= 1 && (n as usize) <= cluster.len() {
            selected.push(n as usize - 1);
        } else {
            warnings.push(Warning::new(
                "fingerprint",
                "filter_index_out_of_range",
                format!("cluster [{ids}]: index {n} ignored"),
            ));
        }
    }
    selected.sort_unstable();
    selected.dedup();
    if selected.is_empty() {
        fallback("no valid selection".into(), &mut warnings);
        selected.push(0);
    }
    if selected.len() > cap {
        warnings.push(Warning::new(
            "fingerprint",
            "filter_cap_exceeded",
            format!(
                "cluster [{ids}]: {} selected, keeping the first {cap}",
                selected.len()
            ),
        ));
        selected.truncate(cap.max(1));
    }
    Ok(FilterOutcome {
        selected,
        reason: selection.reason,
        warnings,
    })
}
