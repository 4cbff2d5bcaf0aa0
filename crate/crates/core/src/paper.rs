//! Markdown paper loading and segmentation.
//!
//! A paper is split into paragraphs (blank-line separated, with fenced code and
//! display-math blocks kept whole) and every paragraph carries 1-indexed
//! sentences. These coordinates are what guide units and criteria cite, so
//! segmentation is a pure function of the input text.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PaperError {
    #[error("document is empty")]
    EmptyDocument,
    #[error("failed to read paper {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParagraphKind {
    Prose,
    CodeFence,
    EquationBlock,
    Heading,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: usize,
    pub kind: ParagraphKind,
    pub raw: String,
    pub sentences: Vec<Sentence>,
}

impl Paragraph {
    pub fn sentence(&self, index: usize) -> Option<&Sentence> {
        index.checked_sub(1).and_then(|i| self.sentences.get(i))
    }

    /// Sentences rendered as `[1]: ...` lines, the addressing used in prompts.
    pub fn indexed_listing(&self) -> String {
        self.sentences
            .iter()
            .map(|s| format!("[{}]: {}", s.index, s.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperDoc {
    pub title: String,
    pub source_path: String,
    pub paragraphs: Vec<Paragraph>,
}

impl PaperDoc {
    pub fn paragraph(&self, id: usize) -> Option<&Paragraph> {
        self.paragraphs.get(id)
    }

    /// Paragraph raw texts joined by blank lines.
    pub fn body_text(&self) -> String {
        self.paragraphs
            .iter()
            .map(|p| p.raw.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Texts of the given sentences of one paragraph, in index order.
    pub fn sentence_texts(&self, paragraph_id: usize, indices: &[usize]) -> Vec<&str> {
        let Some(p) = self.paragraph(paragraph_id) else {
            return Vec::new();
        };
        indices
            .iter()
            .filter_map(|&i| p.sentence(i).map(|s| s.text.as_str()))
            .collect()
    }

    /// Paper text bounded by `budget` characters. When the whole body does not
    /// fit, paragraphs under method-like headings are kept first, then the
    /// rest in document order; the result keeps original paragraph order.
    pub fn context_text(&self, budget: usize) -> String {
        let full = self.body_text();
        if full.chars().count() <= budget {
            return full;
        }
        const PRIORITY: &[&str] = &[
            "method",
            "approach",
            "model",
            "architecture",
            "training",
            "implementation",
            "experiment",
            "setup",
            "algorithm",
        ];
        let mut priority = vec![false; self.paragraphs.len()];
        let mut in_priority = false;
        for p in &self.paragraphs {
            if p.kind == ParagraphKind::Heading {
                let lower = p.raw.to_lowercase();
                in_priority = PRIORITY.iter().any(|k| lower.contains(k));
            }
            priority[p.id] = in_priority;
        }
        let mut keep = vec![false; self.paragraphs.len()];
        let mut used = 0usize;
        let order = self
            .paragraphs
            .iter()
            .filter(|p| priority[p.id])
            .chain(self.paragraphs.iter().filter(|p| !priority[p.id]));
        for p in order {
            let len = p.raw.chars().count() + 2;
            if used + len <= budget {
                keep[p.id] = true;
                used += len;
            }
        }
        let mut out = Vec::new();
        let mut skipped = false;
        for p in &self.paragraphs {
            if keep[p.id] {
                if skipped {
                    out.push("[...]".to_string());
                    skipped = false;
                }
                out.push(p.raw.clone());
            } else {
                skipped = true;
            }
        }
        if skipped {
            out.push("[...]".to_string());
        }
        out.join("\n\n")
    }
}

pub fn load_paper_file(path: &Path) -> Result<PaperDoc, PaperError> {
    let text = std::fs::read_to_string(path).map_err(|source| PaperError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut doc = load_paper(&text)?;
    doc.source_path = path.display().to_string();
    Ok(doc)
}

/// Segment Markdown into a [`PaperDoc`].
pub fn load_paper(markdown: &str) -> Result<PaperDoc, PaperError> {
    if markdown.trim().is_empty() {
        return Err(PaperError::EmptyDocument);
    }
    let blocks = split_blocks(markdown);
    let mut paragraphs = Vec::with_capacity(blocks.len());
    let mut title: Option<String> = None;
    let mut first_heading: Option<String> = None;

    for (kind, raw) in blocks {
        let sentences: Vec<Sentence> = match kind {
            ParagraphKind::Prose => segment_sentences(&raw),
            ParagraphKind::Heading => {
                let (level, text) = heading_text(&raw);
                if text.is_empty() {
                    continue;
                }
                if level == 1 && title.is_none() {
                    title = Some(text.to_string());
                }
                if first_heading.is_none() {
                    first_heading = Some(text.to_string());
                }
                vec![Sentence {
                    index: 1,
                    text: text.to_string(),
                }]
            }
            ParagraphKind::CodeFence | ParagraphKind::EquationBlock => vec![Sentence {
                index: 1,
                text: raw.trim_end().to_string(),
            }],
        };
        if sentences.is_empty() {
            continue;
        }
        paragraphs.push(Paragraph {
            id: paragraphs.len(),
            kind,
            raw,
            sentences,
        });
    }

    if paragraphs.is_empty() {
        return Err(PaperError::EmptyDocument);
    }
    Ok(PaperDoc {
        title: title.or(first_heading).unwrap_or_default(),
        source_path: String::new(),
        paragraphs,
    })
}

fn heading_text(raw: &str) -> (usize, &str) {
    let trimmed = raw.trim();
    let level = trimmed.chars().take_while(|&c| c == '#').count();
    let text = trimmed[level..].trim().trim_end_matches('#').trim();
    (level, text)
}

fn is_heading(line: &str) -> bool {
    let t = line.trim_start();
    let hashes = t.chars().take_while(|&c| c == '#').count();
    (1..=6).contains(&hashes) && t[hashes..].chars().next().is_none_or(char::is_whitespace)
}

fn fence_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for marker in ["```", "~~~"] {
        if t.starts_with(marker) {
            let ch = marker.chars().next().unwrap();
            let len = t.chars().take_while(|&c| c == ch).count();
            return Some(&t[..len]);
        }
    }
    None
}

const MATH_ENVS: &[&str] = &[
    "equation",
    "align",
    "gather",
    "multline",
    "eqnarray",
    "displaymath",
];

fn math_env_start(line: &str) -> Option<String> {
    let t = line.trim_start();
    let rest = t.strip_prefix("\\begin{")?;
    let name = &rest[..rest.find('}')?];
    let base = name.trim_end_matches('*');
    MATH_ENVS
        .contains(&base)
        .then(|| format!("\\end{{{name}}}"))
}

/// Collapse runs of whitespace into single spaces.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn split_blocks(markdown: &str) -> Vec<(ParagraphKind, String)> {
    let lines: Vec<&str> = markdown.lines().collect();
    let mut blocks = Vec::new();
    let mut prose: Vec<&str> = Vec::new();

    fn flush(prose: &mut Vec<&str>, blocks: &mut Vec<(ParagraphKind, String)>) {
        if !prose.is_empty() {
            let text = normalize_whitespace(&prose.join(" "));
            if !text.is_empty() {
                blocks.push((ParagraphKind::Prose, text));
            }
            prose.clear();
        }
    }

    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim();

        if let Some(marker) = fence_marker(line) {
            flush(&mut prose, &mut blocks);
            let start = i;
            i += 1;
            while i < lines.len() {
                let closing = lines[i].trim();
                if closing.starts_with(marker)
                    && closing
                        .trim_start_matches(marker.chars().next().unwrap())
                        .is_empty()
                {
                    break;
                }
                i += 1;
            }
            let end = i.min(lines.len() - 1);
            blocks.push((ParagraphKind::CodeFence, lines[start..=end].join("\n")));
            i = end + 1;
            continue;
        }

        let math_close = if trimmed.starts_with("$$") {
            let single = trimmed.len() >= 4 && trimmed.ends_with("$$");
            if single {
                flush(&mut prose, &mut blocks);
                blocks.push((ParagraphKind::EquationBlock, trimmed.to_string()));
                i += 1;
                continue;
            }
            Some("$$".to_string())
        } else if trimmed == "\\[" || (trimmed.starts_with("\\[") && !trimmed.ends_with("\\]")) {
            Some("\\]".to_string())
        } else if trimmed.starts_with("\\[") && trimmed.ends_with("\\]") {
            flush(&mut prose, &mut blocks);
            blocks.push((ParagraphKind::EquationBlock, trimmed.to_string()));
            i += 1;
            continue;
        } else {
            math_env_start(line)
        };
        if let Some(close) = math_close {
            flush(&mut prose, &mut blocks);
            let start = i;
            i += 1;
            while i < lines.len() && !lines[i].contains(close.as_str()) {
                i += 1;
            }
            let end = i.min(lines.len() - 1);
            let raw = lines[start..=end]
                .iter()
                .map(|l| l.trim_end())
                .collect::<Vec<_>>()
                .join("\n");
            blocks.push((ParagraphKind::EquationBlock, raw.trim().to_string()));
            i = end + 1;
            continue;
        }

        if trimmed.is_empty() {
            flush(&mut prose, &mut blocks);
        } else if is_heading(line) {
            flush(&mut prose, &mut blocks);
            blocks.push((ParagraphKind::Heading, normalize_whitespace(trimmed)));
        } else {
            prose.push(line);
        }
        i += 1;
    }
    flush(&mut prose, &mut blocks);
    blocks
}

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "eq", "eqs", "fig", "figs", "al", "vs", "cf", "sec", "tab", "no", "approx",
    "resp", "dr", "mr", "ms", "ref", "refs",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201c}', '\u{2018}'];

fn is_abbreviation(text: &str, dot: usize) -> bool {
    let before = &text[..dot];
    let word_start = before
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    let word = before[word_start..]
        .trim_start_matches(OPENERS)
        .to_lowercase();
    if word == "al" {
        // only "et al." counts
        let prev = before[..word_start].trim_end();
        return prev.to_lowercase().ends_with("et");
    }
    ABBREVIATIONS.contains(&word.as_str())
}

/// Split prose into 1-indexed sentences.
///
/// A boundary is terminal punctuation (optionally followed by closing quotes
/// or brackets), then whitespace, then an uppercase letter (possibly behind an
/// opening quote or bracket). Periods ending an allowlisted abbreviation are
/// not boundaries.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut k = 0usize;

    let push = |s: &str, out: &mut Vec<Sentence>| {
        let s = s.trim();
        if !s.is_empty() {
            out.push(Sentence {
                index: out.len() + 1,
                text: s.to_string(),
            });
        }
    };

    while k < chars.len() {
        let (pos, c) = chars[k];
        if !matches!(c, '.' | '!' | '?') {
            k += 1;
            continue;
        }
        let mut j = k + 1;
        while j < chars.len()
            && (matches!(chars[j].1, '.' | '!' | '?') || CLOSERS.contains(&chars[j].1))
        {
            j += 1;
        }
        if j >= chars.len() || !chars[j].1.is_whitespace() {
            k = j.max(k + 1);
            continue;
        }
        let mut n = j;
        while n < chars.len() && chars[n].1.is_whitespace() {
            n += 1;
        }
        if n >= chars.len() {
            k = n;
            continue;
        }
        let next = chars[n].1;
        let capital = next.is_uppercase()
            || (OPENERS.contains(&next) && chars.get(n + 1).is_some_and(|(_, c)| c.is_uppercase()));
        if !capital || (c == '.' && j == k + 1 && is_abbreviation(text, pos)) {
            k = j;
            continue;
        }
        let end = chars[j].0;
        push(&text[start..end], &mut sentences);
        start = chars[n].0;
        k = n;
    }
    push(&text[start..], &mut sentences);
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &[Sentence]) -> Vec<&str> {
        s.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(load_paper(""), Err(PaperError::EmptyDocument)));
        assert!(matches!(
            load_paper(" \n\n\t"),
            Err(PaperError::EmptyDocument)
        ));
    }

    #[test]
    fn blank_lines_split_paragraphs() {
        let doc = load_paper("A.\n\nB.").unwrap();
        assert_eq!(doc.paragraphs.len(), 2);
        assert_eq!(doc.paragraphs[0].id, 0);
        assert_eq!(doc.paragraphs[1].id, 1);
        assert_eq!(doc.paragraphs[1].raw, "B.");
    }

    #[test]
    fn period_split() {
        let s = segment_sentences("We used AdamW. We trained 200 epochs.");
        assert_eq!(texts(&s), ["We used AdamW.", "We trained 200 epochs."]);
        assert_eq!(s[0].index, 1);
        assert_eq!(s[1].index, 2);
    }

    #[test]
    fn single_sentence_without_terminal() {
        let s = segment_sentences("One sentence");
        assert_eq!(
            s,
            vec![Sentence {
                index: 1,
                text: "One sentence".into()
            }]
        );
    }

    #[test]
    fn whitespace_only_gives_no_sentences() {
        assert!(segment_sentences("  \n ").is_empty());
    }

    #[test]
    fn abbreviations_do_not_split() {
        let s = segment_sentences(
            "Losses, e.g. The hinge loss, are common. See Eq. 3 for details. Smith et al. Proposed it.",
        );
        assert_eq!(
            texts(&s),
            [
                "Losses, e.g. The hinge loss, are common.",
                "See Eq. 3 for details.",
                "Smith et al. Proposed it."
            ]
        );
    }

    #[test]
    fn decimals_and_lowercase_continuations() {
        let s = segment_sentences("The rate is 0.01 here. it continues. Then stop!");
        assert_eq!(
            texts(&s),
            ["The rate is 0.01 here. it continues.", "Then stop!"]
        );
    }

    #[test]
    fn quotes_and_brackets_after_terminal() {
        let s = segment_sentences("He said \"stop.\" Then left. (This is aside.) Done?");
        assert_eq!(
            texts(&s),
            [
                "He said \"stop.\"",
                "Then left.",
                "(This is aside.)",
                "Done?"
            ]
        );
    }

    #[test]
    fn fenced_code_keeps_blank_lines() {
        let md = "Intro text.\n\n```python\nx = 1\n\ny = 2\n```\n\nAfter.";
        let doc = load_paper(md).unwrap();
        assert_eq!(doc.paragraphs.len(), 3);
        let fence = &doc.paragraphs[1];
        assert_eq!(fence.kind, ParagraphKind::CodeFence);
        assert_eq!(fence.raw, "```python\nx = 1\n\ny = 2\n```");
        assert_eq!(fence.sentences.len(), 1);
        assert_eq!(fence.sentences[0].text, fence.raw);
    }

    #[test]
    fn display_math_kept_whole() {
        let md = "Loss:\n$$\nL = a\n\n+ b\n$$\nNext.\n\n$$x=1$$";
        let doc = load_paper(md).unwrap();
        let kinds: Vec<_> = doc.paragraphs.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            [
                ParagraphKind::Prose,
                ParagraphKind::EquationBlock,
                ParagraphKind::Prose,
                ParagraphKind::EquationBlock
            ]
        );
        assert_eq!(doc.paragraphs[1].raw, "$$\nL = a\n\n+ b\n$$");
    }

    #[test]
    fn latex_environment_is_equation_block() {
        let doc = load_paper("\\begin{align}\na &= b \\\\\n\nc &= d\n\\end{align}").unwrap();
        assert_eq!(doc.paragraphs.len(), 1);
        assert_eq!(doc.paragraphs[0].kind, ParagraphKind::EquationBlock);
    }

    #[test]
    fn headings_are_paragraphs_and_give_title() {
        let doc = load_paper("# My Paper\nBody line one.\nline two.\n## Method\nText.").unwrap();
        assert_eq!(doc.title, "My Paper");
        assert_eq!(doc.paragraphs.len(), 4);
        assert_eq!(doc.paragraphs[0].kind, ParagraphKind::Heading);
        assert_eq!(doc.paragraphs[0].sentences[0].text, "My Paper");
        assert_eq!(doc.paragraphs[1].raw, "Body line one. line two.");
        assert_eq!(doc.paragraphs[2].sentences[0].text, "Method");
    }

    #[test]
    fn whitespace_is_collapsed_in_prose() {
        let doc = load_paper("a   b\t c\n   d").unwrap();
        assert_eq!(doc.paragraphs[0].raw, "a b c d");
    }

    #[test]
    fn context_text_prefers_method_sections() {
        let md = "# Intro\n\nLong intro paragraph here.\n\n# Method\n\nCore method.";
        let doc = load_paper(md).unwrap();
        assert_eq!(doc.context_text(10_000), doc.body_text());
        let small = doc.context_text(25);
        assert!(small.contains("Core method."));
        assert!(small.contains("# Method"));
        assert!(!small.contains("Long intro"));
    }
}
