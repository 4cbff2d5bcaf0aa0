//! Rubric-tree scoring, leaf pass ratio and the fingerprint/rubric matcher.

mod matcher;
mod rubric;

use serde::{Deserialize, Serialize};

pub use matcher::{match_fingerprint_to_rubric, MatchReport, MATCH_BATCH};
pub use rubric::{pr_leaf, score_rubric, RubricError, RubricNode};

use crate::fingerprint::Criterion;
use crate::gateway::{Gateway, GatewayError};
use crate::reflect::{verify_all, LoopConfig, LoopTrace, Verdict};
use crate::workspace::Workspace;

pub const SCORE_REPORT_FILE: &str = "score_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassPoint {
    pub iteration: u32,
    pub pass_count: usize,
    pub total: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub pr_root: Option<f64>,
    pub pr_leaf: Option<f64>,
    pub leaf_verdicts: Vec<Verdict>,
    pub pass_curve: Vec<PassPoint>,
    pub best_iteration: Option<u32>,
    pub match_report: Option<MatchReport>,
}

/// Per-iteration fingerprint pass ratios from a loop trace.
pub fn pass_curve(trace: &LoopTrace) -> Vec<PassPoint> {
    trace
        .iterations
        .iter()
        .map(|r| PassPoint {
            iteration: r.iteration,
            pass_count: r.pass_count,
            total: r.total,
            ratio: if r.total == 0 {
                1.0
            } else {
                r.pass_count as f64 / r.total as f64
            },
        })
        .collect()
}

/// Grade every leaf of `rubric` against `ws` with the verification prompt.
/// Returns the graded tree and the verdicts in leaf order.
pub fn grade_rubric(
    rubric: &RubricNode,
    ws: &Workspace,
    paper_context: &str,
    gw: &Gateway,
    cfg: &LoopConfig,
) -> Result<(RubricNode, Vec<Verdict>), GatewayError> {
    let as_criteria: Vec<Criterion> = rubric
        .leaves()
        .iter()
        .map(|l| Criterion {
            id: l.id.clone(),
            fact: l.requirement.clone().unwrap_or_default(),
            scope: None,
            rendered: l.requirement.clone().unwrap_or_default(),
            origin_guide_id: String::new(),
            source: None,
        })
        .collect();
    let verdicts = verify_all(ws, &as_criteria, paper_context, gw, cfg, 0)?;
    let mut graded = rubric.clone();
    for (leaf, v) in graded.leaves_mut().into_iter().zip(&verdicts) {
        leaf.score = Some(v.score);
    }
    Ok((graded, verdicts))
}
