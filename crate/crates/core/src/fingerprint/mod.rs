//! Fingerprint extraction: the list of atomic, source-grounded criteria a
//! reproduction is verified against.
//!
//! Stages run in order: framework guides (one call per aspect), configuration
//! guides, a paragraph-by-paragraph exhaustive scan, retrieval grounding of
//! framework and configuration units, standardization into `<fact>`/`<scope>`
//! criteria, embedding-cluster dedup and a per-cluster semantic filter.

mod criteria;
mod dedup;
mod filter;
mod grounding;
mod guides;
pub mod prompts;

use serde::{Deserialize, Serialize};

use crate::artifacts::ArtifactDir;
use crate::gateway::Gateway;
use crate::paper::PaperDoc;
use crate::parallel::map_bounded;
use crate::{StageError, Warning};

pub use criteria::{normalize_key, parse_fact_scope, render_fact_scope, standardize, SpanError};
pub use dedup::{cluster_by_similarity, connected_components, dedup, DedupOutcome};
pub use filter::{semantic_filter, FilterOutcome};
pub use grounding::{ground, GroundOutcome, ParagraphIndex};
pub use guides::{exhaustive_scan, extract_configuration_guides, extract_framework_guides};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuideLevel {
    Framework,
    Configuration,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Data,
    Model,
    Training,
    Evaluation,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [
        Aspect::Data,
        Aspect::Model,
        Aspect::Training,
        Aspect::Evaluation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Aspect::Data => "data",
            Aspect::Model => "model",
            Aspect::Training => "training",
            Aspect::Evaluation => "evaluation",
        }
    }
}

/// Paragraph plus strictly increasing 1-based sentence indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub paragraph_id: usize,
    pub sentence_indices: Vec<usize>,
}

impl SourceRef {
    pub fn is_valid_in(&self, doc: &PaperDoc) -> bool {
        let Some(p) = doc.paragraph(self.paragraph_id) else {
            return false;
        };
        !self.sentence_indices.is_empty()
            && self.sentence_indices.windows(2).all(|w| w[0] < w[1])
            && self
                .sentence_indices
                .iter()
                .all(|&i| i >= 1 && i <= p.sentences.len())
    }

    pub fn text(&self, doc: &PaperDoc) -> String {
        doc.sentence_texts(self.paragraph_id, &self.sentence_indices)
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuideUnit {
    pub id: String,
    pub level: GuideLevel,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<Aspect>,
    #[serde(default)]
    pub source: Option<SourceRef>,
    /// grounding was attempted and found no source sentence
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub grounding_miss: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: String,
    pub fact: String,
    pub scope: Option<String>,
    pub rendered: String,
    pub origin_guide_id: String,
    pub source: Option<SourceRef>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub guides: usize,
    pub standardized: usize,
    pub after_dedup: usize,
    #[serde(rename = "final")]
    pub final_count: usize,
}

impl StageCounts {
    pub fn is_monotone(&self) -> bool {
        self.standardized >= self.after_dedup && self.after_dedup >= self.final_count
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub criteria: Vec<Criterion>,
    pub stage_counts: StageCounts,
}

/// One similarity cluster: members in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<String>,
    pub threshold: f64,
    /// members left after exact (fact, scope) dedup
    pub survivors: Vec<String>,
    /// members kept by the semantic filter
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerprintConfig {
    pub top_k_paragraphs: usize,
    pub dedup_threshold: f64,
    pub context_window: usize,
    pub filter_cap: usize,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        Self {
            top_k_paragraphs: 3,
            dedup_threshold: 0.92,
            context_window: 2,
            filter_cap: 5,
        }
    }
}

/// Everything the fingerprint stage produces, intermediate artifacts included.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintRun {
    pub guides: Vec<GuideUnit>,
    pub criteria_raw: Vec<Criterion>,
    pub clusters: Vec<Cluster>,
    pub fingerprint: Fingerprint,
    pub warnings: Vec<Warning>,
}

pub const GUIDES_FILE: &str = "guides.json";
pub const CRITERIA_RAW_FILE: &str = "criteria_raw.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const FINGERPRINT_FILE: &str = "fingerprint.json";
pub const WARNINGS_FILE: &str = "fingerprint_warnings.json";

fn first_error<T>(results: Vec<Result<T, StageError>>) -> Result<Vec<T>, StageError> {
    results.into_iter().collect()
}

/// Run the whole extraction. When `out` is given every intermediate artifact
/// is written as soon as its stage finishes, so a failed run can be inspected.
pub fn build_fingerprint(
    doc: &PaperDoc,
    gw: &Gateway,
    cfg: &FingerprintConfig,
    out: Option<&ArtifactDir>,
) -> Result<FingerprintRun, StageError> {
    if doc.paragraphs.is_empty() {
        return Err(crate::PaperError::EmptyDocument.into());
    }
    let mut warnings = Vec::new();

    let mut framework = extract_framework_guides(doc, gw)?;
    warnings.append(&mut framework.1);
    let mut configuration = extract_configuration_guides(doc, gw)?;
    warnings.append(&mut configuration.1);
    let mut exhaustive = exhaustive_scan(doc, gw, cfg.context_window)?;
    warnings.append(&mut exhaustive.1);

    // retrieval grounding for the two summary levels; scanned units cite themselves
    let index = ParagraphIndex::build(doc, gw)?;
    let to_ground: Vec<GuideUnit> = framework.0.into_iter().chain(configuration.0).collect();
    let grounded = first_error(map_bounded(gw.max_parallel(), &to_ground, |u| {
        ground(u, doc, &index, gw, cfg.top_k_paragraphs).map_err(StageError::from)
    }))?;
    let mut guides = Vec::with_capacity(grounded.len() + exhaustive.0.len());
    for (mut unit, outcome) in to_ground.into_iter().zip(grounded) {
        match outcome {
            GroundOutcome::Grounded(src) => unit.source = Some(src),
            GroundOutcome::Miss(w) => {
                unit.grounding_miss = true;
                warnings.push(w);
            }
        }
        guides.push(unit);
    }
    guides.extend(exhaustive.0);
    if let Some(dir) = out {
        dir.write_json(GUIDES_FILE, &guides)?;
    }

    let standardized = first_error(map_bounded(gw.max_parallel(), &guides, |u| {
        standardize(u, doc, gw).map_err(StageError::from)
    }))?;
    let mut criteria_raw = Vec::new();
    for (mut crits, mut w) in standardized {
        warnings.append(&mut w);
        criteria_raw.append(&mut crits);
    }
    for (i, c) in criteria_raw.iter_mut().enumerate() {
        c.id = format!("c{:04}", i + 1);
    }
    if let Some(dir) = out {
        dir.write_json(CRITERIA_RAW_FILE, &criteria_raw)?;
    }

    let keys: Vec<String> = criteria_raw
        .iter()
        .map(|c| normalize_key(&c.fact))
        .collect();
    let embeddings = first_error(map_bounded(gw.max_parallel(), &keys, |k| {
        let text = if k.is_empty() { "(empty)" } else { k.as_str() };
        gw.embed(text).map_err(StageError::from)
    }))?;
    let deduped = dedup(&criteria_raw, &embeddings, cfg.dedup_threshold);

    let multi: Vec<usize> = (0..deduped.clusters.len())
        .filter(|&i| deduped.clusters[i].survivors.len() >= 2)
        .collect();
    let filtered = first_error(map_bounded(gw.max_parallel(), &multi, |&ci| {
        let members: Vec<&Criterion> = deduped.clusters[ci]
            .survivors
            .iter()
            .map(|&i| &criteria_raw[i])
            .collect();
        semantic_filter(&members, gw, cfg.filter_cap).map_err(StageError::from)
    }))?;

    let mut keep = vec![false; criteria_raw.len()];
    let mut clusters: Vec<Cluster> = deduped
        .clusters
        .iter()
        .map(|c| {
            if c.survivors.len() == 1 {
                keep[c.survivors[0]] = true;
            }
            Cluster {
                members: c
                    .members
                    .iter()
                    .map(|&i| criteria_raw[i].id.clone())
                    .collect(),
                threshold: cfg.dedup_threshold,
                survivors: c
                    .survivors
                    .iter()
                    .map(|&i| criteria_raw[i].id.clone())
                    .collect(),
                selected: if c.survivors.len() == 1 {
                    vec![criteria_raw[c.survivors[0]].id.clone()]
                } else {
                    Vec::new()
                },
            }
        })
        .collect();
    for (&ci, mut outcome) in multi.iter().zip(filtered) {
        warnings.append(&mut outcome.warnings);
        let survivors = &deduped.clusters[ci].survivors;
        for &pos in &outcome.selected {
            keep[survivors[pos]] = true;
            clusters[ci]
                .selected
                .push(criteria_raw[survivors[pos]].id.clone());
        }
    }
    if let Some(dir) = out {
        dir.write_json(CLUSTERS_FILE, &clusters)?;
    }

    let final_criteria: Vec<Criterion> = criteria_raw
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(c, _)| c.clone())
        .collect();
    let fingerprint = Fingerprint {
        stage_counts: StageCounts {
            guides: guides.len(),
            standardized: criteria_raw.len(),
            after_dedup: deduped.survivor_count(),
            final_count: final_criteria.len(),
        },
        criteria: final_criteria,
    };
    if let Some(dir) = out {
        dir.write_json(WARNINGS_FILE, &warnings)?;
        dir.write_json(FINGERPRINT_FILE, &fingerprint)?;
    }
    Ok(FingerprintRun {
        guides,
        criteria_raw,
        clusters,
        fingerprint,
        warnings,
    })
}
