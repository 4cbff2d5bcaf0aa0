use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fingerprint::Criterion;
use crate::gateway::structured::extract_json_list;
use crate::gateway::{AskError, Gateway, GatewayError, Purpose};
use crate::parallel::map_bounded;
use crate::{Warning, MAX_REPROMPTS};

pub const MATCH_BATCH: usize = 20;

const MATCH_SYSTEM: &str = "\
You compare two checklists for reproducing the same research paper: numbered rubric requirements \
written by experts, and numbered criteria extracted automatically. For every criterion, list the \
rubric requirements that check the same implementation detail. A criterion may match several \
requirements or none.

Reply with ONLY a JSON list with one object per criterion, of the form \
{\"criterion\": <criterion number>, \"matches\": [<requirement numbers>]}.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub rubric_total: usize,
    pub rubric_covered: usize,
    pub fp_total: usize,
    pub fp_matching: usize,
    pub recall: f64,
    pub precision: f64,
}

impl MatchReport {
    /// `matrix[i][j]`: criterion i matches rubric requirement j.
    pub fn from_matrix(matrix: &[Vec<bool>], rubric_total: usize) -> Self {
        let fp_total = matrix.len();
        let fp_matching = matrix.iter().filter(|row| row.iter().any(|&m| m)).count();
        let rubric_covered = (0..rubric_total)
            .filter(|&j| {
                matrix
                    .iter()
                    .any(|row| row.get(j).copied().unwrap_or(false))
            })
            .count();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            rubric_total,
            rubric_covered,
            fp_total,
            fp_matching,
            recall: ratio(rubric_covered, rubric_total),
            precision: ratio(fp_matching, fp_total),
        }
    }
}

fn parse_matches(
    reply: &str,
    batch_len: usize,
    rubric_len: usize,
) -> Result<Vec<BTreeSet<usize>>, String> {
    let items = extract_json_list(reply).map_err(|e| e.reason)?;
    let mut rows = vec![BTreeSet::new(); batch_len];
    for item in items {
        let Value::Object(obj) = item else {
            return Err("every entry must be an object".into());
        };
        let c = obj
            .get("criterion")
            .and_then(Value::as_u64)
            .ok_or("entry without an integer \"criterion\"")? as usize;
        if c == 0 || c > batch_len {
            return Err(format!("criterion number {c} is out of range"));
        }
        let Some(Value::Array(ms)) = obj.get("matches") else {
            return Err(format!("criterion {c} has no \"matches\" list"));
        };
        for m in ms {
            let j = m.as_u64().ok_or("non-integer requirement number")? as usize;
            if j >= 1 && j <= rubric_len {
                rows[c - 1].insert(j - 1);
            }
        }
    }
    Ok(rows)
}

/// Judge each criterion against the full requirement list, in batches. A
/// batch that never parses counts as unmatched.
pub fn match_fingerprint_to_rubric(
    criteria: &[Criterion],
    requirements: &[String],
    gw: &Gateway,
) -> Result<(MatchReport, Vec<Warning>), GatewayError> {
    let listing: String = requirements
        .iter()
        .enumerate()
        .map(|(j, r)| format!("[{}] {r}\n", j + 1))
        .collect();
    let batches: Vec<&[Criterion]> = criteria.chunks(MATCH_BATCH).collect();
    let results = map_bounded(gw.max_parallel(), &batches, |batch| {
        let numbered: String = batch
            .iter()
            .enumerate()
            .map(|(i, c)| format!("[{}] {}\n", i + 1, c.rendered))
            .collect();
        let req = gw
            .request(Purpose::Match)
            .system(MATCH_SYSTEM)
            .user(format!(
                "Rubric requirements:\n{listing}\nCriteria:\n{numbered}"
            ));
        gw.ask(req, MAX_REPROMPTS, |t| {
            parse_matches(t, batch.len(), requirements.len())
        })
    });

    let mut matrix = Vec::with_capacity(criteria.len());
    let mut warnings = Vec::new();
    for (b, (batch, result)) in batches.iter().zip(results).enumerate() {
        let rows = match result {
            Ok(a) => a.value,
            Err(AskError::Gateway(e)) => return Err(e),
            Err(AskError::Unparseable { reason, .. }) => {
                warnings.push(Warning::new(
                    "scoring",
                    "match_batch_unparseable",
                    format!("batch {} counted as unmatched: {reason}", b + 1),
                ));
                vec![BTreeSet::new(); batch.len()]
            }
        };
        for row in rows {
            matrix.push((0..requirements.len()).map(|j| row.contains(&j)).collect());
        }
    }
    Ok((
        MatchReport::from_matrix(&matrix, requirements.len()),
        warnings,
    ))
}
