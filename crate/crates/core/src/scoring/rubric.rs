use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RubricError {
    #[error("leaf {0} has no score")]
    UngradedLeaf(String),
    #[error("node {0} has no child with positive weight")]
    DegenerateWeights(String),
    #[error("node {id}: {reason}")]
    InvalidNode { id: String, reason: String },
    #[error("no leaves to score")]
    EmptyRubric,
}

/// A weighted requirement tree. Internal nodes have `children`; leaves have
/// a `requirement` and, once graded, a 0/1 `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricNode {
    pub id: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<RubricNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u8>,
}

fn unit_weight() -> f64 {
    1.0
}

impl RubricNode {
    pub fn leaf(id: impl Into<String>, weight: f64, requirement: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            weight,
            children: None,
            requirement: Some(requirement.into()),
            score: None,
        }
    }

    pub fn graded(id: impl Into<String>, weight: f64, score: u8) -> Self {
        Self {
            score: Some(score),
            ..Self::leaf(id, weight, "")
        }
    }

    pub fn internal(id: impl Into<String>, weight: f64, children: Vec<RubricNode>) -> Self {
        Self {
            id: id.into(),
            weight,
            children: Some(children),
            requirement: None,
            score: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Structural checks: one of children/requirement, valid weights and scores.
    pub fn validate(&self) -> Result<(), RubricError> {
        let invalid = |reason: &str| {
            Err(RubricError::InvalidNode {
                id: self.id.clone(),
                reason: reason.into(),
            })
        };
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return invalid("weight must be a nonnegative number");
        }
        match (&self.children, &self.requirement) {
            (Some(_), Some(_)) => return invalid("has both children and a requirement"),
            (None, None) => return invalid("has neither children nor a requirement"),
            (Some(c), None) if c.is_empty() => return invalid("has an empty child list"),
            _ => {}
        }
        if matches!(self.score, Some(s) if s > 1) {
            return invalid("score must be 0 or 1");
        }
        for c in self.children.iter().flatten() {
            c.validate()?;
        }
        Ok(())
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&RubricNode> {
        match &self.children {
            None => vec![self],
            Some(cs) => cs.iter().flat_map(RubricNode::leaves).collect(),
        }
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut RubricNode> {
        if self.children.is_none() {
            return vec![self];
        }
        self.children
            .iter_mut()
            .flatten()
            .flat_map(RubricNode::leaves_mut)
            .collect()
    }
}

/// Weighted average of child scores, recursively from the leaves.
pub fn score_rubric(node: &RubricNode) -> Result<f64, RubricError> {
    match &node.children {
        None => node
            .score
            .map(f64::from)
            .ok_or_else(|| RubricError::UngradedLeaf(node.id.clone())),
        Some(children) => {
            let total: f64 = children.iter().map(|c| c.weight).sum();
            if total <= 0.0 {
                return Err(RubricError::DegenerateWeights(node.id.clone()));
            }
            let mut acc = 0.0;
            for c in children {
                acc += c.weight * score_rubric(c)?;
            }
            Ok((acc / total).clamp(0.0, 1.0))
        }
    }
}

/// Share of leaves that pass.
pub fn pr_leaf(scores: &[u8]) -> Result<f64, RubricError> {
    if scores.is_empty() {
        return Err(RubricError::EmptyRubric);
    }
    let passed = scores.iter().filter(|&&s| s == 1).count();
    Ok(passed as f64 / scores.len() as f64)
}
