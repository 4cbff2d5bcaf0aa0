use super::{prompts, GuideUnit, SourceRef};
use crate::gateway::structured::extract_int_array;
use crate::gateway::{cosine, AskError, Gateway, GatewayError, Purpose};
use crate::paper::{PaperDoc, ParagraphKind};
use crate::parallel::{map_bounded, map_cpu};
use crate::{Warning, MAX_REPROMPTS};

/// Paragraph embeddings for retrieval. Headings are not indexed.
#[derive(Debug, Clone)]
pub struct ParagraphIndex {
    entries: Vec<(usize, Vec<f64>)>,
}

impl ParagraphIndex {
    pub fn build(doc: &PaperDoc, gw: &Gateway) -> Result<Self, GatewayError> {
        let ids: Vec<usize> = doc
            .paragraphs
            .iter()
            .filter(|p| p.kind != ParagraphKind::Heading)
            .map(|p| p.id)
            .collect();
        let vectors = map_bounded(gw.max_parallel(), &ids, |&id| {
            gw.embed(&doc.paragraphs[id].raw)
        });
        let entries = ids
            .into_iter()
            .zip(vectors)
            .map(|(id, v)| v.map(|v| (id, v)))
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn from_vectors(entries: Vec<(usize, Vec<f64>)>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Paragraph ids of the `k` most similar paragraphs, best first; ties go
    /// to the earlier paragraph.
    pub fn top_k(&self, query: &[f64], k: usize) -> Vec<usize> {
        let scores = map_cpu(&self.entries, |(id, v)| (*id, cosine(query, v)));
        let mut ranked = scores;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.into_iter().take(k).map(|(id, _)| id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundOutcome {
    Grounded(SourceRef),
    Miss(Warning),
}

fn miss(unit: &GuideUnit, why: impl std::fmt::Display) -> GroundOutcome {
    GroundOutcome::Miss(Warning::new(
        "fingerprint",
        "grounding_miss",
        format!("unit {} not grounded: {why}", unit.id),
    ))
}

/// Attach a single-paragraph source to a unit: retrieve the top-k paragraphs,
/// let the model pick sentences, keep the highest-ranked paragraph's picks.
pub fn ground(
    unit: &GuideUnit,
    doc: &PaperDoc,
    index: &ParagraphIndex,
    gw: &Gateway,
    k: usize,
) -> Result<GroundOutcome, GatewayError> {
    if let Some(src) = &unit.source {
        return Ok(GroundOutcome::Grounded(src.clone()));
    }
    if index.is_empty() {
        return Ok(miss(unit, "no indexed paragraphs"));
    }
    let query = gw.embed(&unit.text)?;
    let top = index.top_k(&query, k);

    let mut numbering: Vec<(usize, usize)> = Vec::new();
    let mut listing = String::new();
    for &pid in &top {
        listing.push_str(&format!("### Paragraph {pid}\n"));
        for s in &doc.paragraphs[pid].sentences {
            numbering.push((pid, s.index));
            listing.push_str(&format!("[{}]: {}\n", numbering.len(), s.text));
        }
        listing.push('\n');
    }
    let req = gw
        .request(Purpose::Ground)
        .system(prompts::GROUND_SYSTEM)
        .user(format!(
            "Detail:\n{}\n\nCandidate sentences:\n{listing}",
            unit.text
        ));
    let picked = match gw.ask(req, MAX_REPROMPTS, |t| {
        extract_int_array(t).map_err(|e| e.reason)
    }) {
        Ok(a) => a.value,
        Err(AskError::Gateway(e)) => return Err(e),
        Err(AskError::Unparseable { reason, .. }) => return Ok(miss(unit, reason)),
    };
    let selected: Vec<(usize, usize)> = picked
        .iter()
        .filter(|&&n| n >= 1 && (n as usize) <= numbering.len())
        .map(|&n| numbering[n as usize - 1])
        .collect();
    let Some(&best) = top
        .iter()
        .find(|pid| selected.iter().any(|(p, _)| p == *pid))
    else {
        return Ok(miss(
            unit,
            format!("no valid sentence selected from {picked:?}"),
        ));
    };
    let mut sentence_indices: Vec<usize> = selected
        .iter()
        .filter(|(p, _)| *p == best)
        .map(|(_, s)| *s)
        .collect();
    sentence_indices.sort_unstable();
    sentence_indices.dedup();
    Ok(GroundOutcome::Grounded(SourceRef {
        paragraph_id: best,
        sentence_indices,
    }))
}
