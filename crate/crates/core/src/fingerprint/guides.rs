use serde_json::Value;

use super::{prompts, Aspect, GuideLevel, GuideUnit, SourceRef};
use crate::gateway::structured::{extract_int_array, extract_json_list};
use crate::gateway::{AskError, Gateway, Purpose};
use crate::paper::{PaperDoc, ParagraphKind};
use crate::parallel::map_bounded;
use crate::{StageError, Warning, MAX_REPROMPTS};

const STAGE: &str = "fingerprint";

/// Unit texts from a guide reply: strings, or objects with `text` and an
/// optional `name`, which is prefixed to the text with a dash separator.
fn parse_unit_texts(reply: &str) -> Result<Vec<String>, String> {
    let list = extract_json_list(reply).map_err(|e| e.reason)?;
    let mut out = Vec::with_capacity(list.len());
    for item in list {
        let text = match &item {
            Value::String(s) => s.trim().to_string(),
            Value::Object(obj) => {
                let body = ["text", "content", "description", "phrase"]
                    .iter()
                    .find_map(|k| obj.get(*k).and_then(Value::as_str))
                    .map(str::trim)
                    .unwrap_or_default();
                let name = obj.get("name").and_then(Value::as_str).map(str::trim);
                match name {
                    Some(n) if !n.is_empty() && !body.is_empty() => format!("{n} \u{2014} {body}"),
                    Some(n) if !n.is_empty() => n.to_string(),
                    _ => body.to_string(),
                }
            }
            _ => {
                return Err(format!(
                    "list item is neither a string nor an object: {item}"
                ))
            }
        };
        if !text.is_empty() {
            out.push(text);
        }
    }
    Ok(out)
}

fn ask_units(
    gw: &Gateway,
    system: &str,
    user: String,
    stage: &str,
) -> Result<(Vec<String>, Vec<Warning>), StageError> {
    let req = gw.request(Purpose::GuideExtract).system(system).user(user);
    match gw.ask(req, MAX_REPROMPTS, parse_unit_texts) {
        Ok(asked) => {
            let mut warnings = Vec::new();
            if asked.reprompts > 0 {
                warnings.push(Warning::new(
                    STAGE,
                    "reprompt",
                    format!(
                        "{stage}: {} re-prompt(s) before a parseable reply",
                        asked.reprompts
                    ),
                ));
            }
            Ok((asked.value, warnings))
        }
        Err(AskError::Gateway(e)) => Err(e.into()),
        Err(AskError::Unparseable { reason, .. }) => Err(StageError::failed(stage, reason)),
    }
}

/// One prompt per aspect; units are tagged with their aspect.
pub fn extract_framework_guides(
    doc: &PaperDoc,
    gw: &Gateway,
) -> Result<(Vec<GuideUnit>, Vec<Warning>), StageError> {
    let paper = doc.body_text();
    let replies = map_bounded(gw.max_parallel(), &Aspect::ALL, |&aspect| {
        ask_units(
            gw,
            &prompts::framework_system(aspect),
            format!("Aspect: {}\n\nPaper:\n{paper}", aspect.as_str()),
            "framework",
        )
    });
    let mut units = Vec::new();
    let mut warnings = Vec::new();
    for (aspect, reply) in Aspect::ALL.into_iter().zip(replies) {
        let (texts, mut w) = reply?;
        warnings.append(&mut w);
        for (n, text) in texts.into_iter().enumerate() {
            units.push(GuideUnit {
                id: format!("fw-{}-{}", aspect.as_str(), n + 1),
                level: GuideLevel::Framework,
                text,
                aspect: Some(aspect),
                source: None,
                grounding_miss: false,
            });
        }
    }
    Ok((units, warnings))
}

pub fn extract_configuration_guides(
    doc: &PaperDoc,
    gw: &Gateway,
) -> Result<(Vec<GuideUnit>, Vec<Warning>), StageError> {
    let (texts, warnings) = ask_units(
        gw,
        prompts::CONFIGURATION_SYSTEM,
        format!("Paper:\n{}", doc.body_text()),
        "configuration",
    )?;
    let units = texts
        .into_iter()
        .enumerate()
        .map(|(n, text)| GuideUnit {
            id: format!("cfg-{}", n + 1),
            level: GuideLevel::Configuration,
            text,
            aspect: None,
            source: None,
            grounding_miss: false,
        })
        .collect();
    Ok((units, warnings))
}

fn scan_prompt(doc: &PaperDoc, paragraph_id: usize, window: usize) -> String {
    let start = paragraph_id.saturating_sub(window);
    let context: Vec<&str> = doc.paragraphs[start..paragraph_id]
        .iter()
        .map(|p| p.raw.as_str())
        .collect();
    let context = if context.is_empty() {
        "(none)".to_string()
    } else {
        context.join("\n\n")
    };
    format!(
        "Preceding context (for understanding only; do not select from it):\n{context}\n\n\
         Paragraph:\n{}",
        doc.paragraphs[paragraph_id].indexed_listing()
    )
}

fn scan_paragraph(
    doc: &PaperDoc,
    gw: &Gateway,
    paragraph_id: usize,
    window: usize,
) -> Result<(Vec<GuideUnit>, Vec<Warning>), StageError> {
    let para = &doc.paragraphs[paragraph_id];
    let req = gw
        .request(Purpose::GuideExtract)
        .system(prompts::SCAN_SYSTEM)
        .user(scan_prompt(doc, paragraph_id, window));
    let mut warnings = Vec::new();
    let indices = match gw.ask(req, MAX_REPROMPTS, |t| {
        extract_int_array(t).map_err(|e| e.reason)
    }) {
        Ok(asked) => asked.value,
        Err(AskError::Gateway(e)) => return Err(e.into()),
        Err(AskError::Unparseable { reason, .. }) => {
            warnings.push(Warning::new(
                STAGE,
                "scan_unparseable",
                format!("paragraph {paragraph_id} skipped: {reason}"),
            ));
            return Ok((Vec::new(), warnings));
        }
    };

    let n = para.sentences.len() as i64;
    let (valid, invalid): (Vec<i64>, Vec<i64>) = indices.iter().partition(|&&i| i >= 1 && i <= n);
    if !invalid.is_empty() {
        if valid.is_empty() {
            warnings.push(Warning::new(
                STAGE,
                "scan_out_of_range",
                format!("paragraph {paragraph_id} skipped: no valid index in {indices:?} ({n} sentences)"),
            ));
        } else {
            for i in &invalid {
                warnings.push(Warning::new(
                    STAGE,
                    "scan_out_of_range",
                    format!("paragraph {paragraph_id}: index {i} dropped ({n} sentences)"),
                ));
            }
        }
    }
    let mut selected: Vec<usize> = valid.into_iter().map(|i| i as usize).collect();
    selected.sort_unstable();
    selected.dedup();
    let units = selected
        .into_iter()
        .map(|idx| GuideUnit {
            id: format!("ex-p{paragraph_id}-s{idx}"),
            level: GuideLevel::Exhaustive,
            text: para.sentences[idx - 1].text.clone(),
            aspect: None,
            source: Some(SourceRef {
                paragraph_id,
                sentence_indices: vec![idx],
            }),
            grounding_miss: false,
        })
        .collect();
    Ok((units, warnings))
}

/// Scan every prose paragraph with the preceding `window` paragraphs as
/// context; each selected sentence becomes a self-grounded unit.
pub fn exhaustive_scan(
    doc: &PaperDoc,
    gw: &Gateway,
    window: usize,
) -> Result<(Vec<GuideUnit>, Vec<Warning>), StageError> {
    let prose: Vec<usize> = doc
        .paragraphs
        .iter()
        .filter(|p| p.kind == ParagraphKind::Prose)
        .map(|p| p.id)
        .collect();
    let results = map_bounded(gw.max_parallel(), &prose, |&pid| {
        scan_paragraph(doc, gw, pid, window)
    });
    let mut units = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        let (mut u, mut w) = r?;
        units.append(&mut u);
        warnings.append(&mut w);
    }
    Ok((units, warnings))
}
