//! Line-level structure of Python source: logical lines, class/function
//! blocks, import statements and stub detection. Strings, brackets and
//! backslash continuations are tracked so that docstrings and wrapped
//! signatures do not confuse indentation.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// One logical statement, possibly spanning several physical lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalLine {
    pub start: usize,
    pub end: usize,
    pub indent: usize,
    pub text: String,
}

impl LogicalLine {
    fn is_comment(&self) -> bool {
        self.text.trim_start().starts_with('#')
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Class,
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub indent: usize,
    /// first physical line, decorators included
    pub start: usize,
    /// physical line index one past the block
    pub end: usize,
    /// statement text following the header colon on the same line
    pub inline_body: Option<String>,
    /// own body statements, nested blocks excluded
    pub statements: Vec<String>,
    pub children: Vec<Block>,
}

impl Block {
    /// Only docstrings, `pass`, `...`, `raise NotImplementedError` and
    /// comments, recursively.
    pub fn is_stub(&self) -> bool {
        self.inline_body
            .iter()
            .chain(&self.statements)
            .all(|s| is_stub_statement(s))
            && self.children.iter().all(Block::is_stub)
    }

    /// First nested block with an executable body, as `Outer.inner`.
    pub fn first_implemented(&self) -> Option<String> {
        let own = self
            .inline_body
            .iter()
            .chain(&self.statements)
            .any(|s| !is_stub_statement(s));
        if own && (self.kind == BlockKind::Function || self.children.iter().all(Block::is_stub)) {
            return Some(self.name.clone());
        }
        for c in &self.children {
            if let Some(inner) = c.first_implemented() {
                return Some(format!("{}.{inner}", self.name));
            }
        }
        own.then(|| self.name.clone())
    }

    pub fn source(&self, lines: &[&str]) -> String {
        let mut out = lines[self.start..self.end].join("\n");
        out.push('\n');
        out
    }
}

#[derive(Default, Clone, Copy)]
struct ScanState {
    quote: Option<(char, bool)>,
    depth: usize,
}

/// Advance the scanner over one physical line; returns true when the line
/// ends with a backslash continuation.
fn scan_line(state: &mut ScanState, line: &str) -> bool {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if let Some((q, triple)) = state.quote {
            if c == '\\' {
                i += 2;
                continue;
            }
            if c == q {
                if !triple {
                    state.quote = None;
                } else if chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                    state.quote = None;
                    i += 3;
                    continue;
                }
            }
            i += 1;
            continue;
        }
        match c {
            '#' => return false,
            '\'' | '"' => {
                let triple = chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c);
                state.quote = Some((c, triple));
                i += if triple { 3 } else { 1 };
                continue;
            }
            '(' | '[' | '{' => state.depth += 1,
            ')' | ']' | '}' => state.depth = state.depth.saturating_sub(1),
            '\\' if i + 1 == chars.len() => return true,
            _ => {}
        }
        i += 1;
    }
    // an unterminated single-quoted string does not survive the line
    if matches!(state.quote, Some((_, false))) {
        state.quote = None;
    }
    false
}

pub fn logical_lines(src: &str) -> Vec<LogicalLine> {
    let mut out: Vec<LogicalLine> = Vec::new();
    let mut state = ScanState::default();
    let mut continued = false;
    for (n, line) in src.lines().enumerate() {
        let open = continued || state.quote.is_some() || state.depth > 0;
        if open {
            if let Some(last) = out.last_mut() {
                last.text.push('\n');
                last.text.push_str(line);
                last.end = n + 1;
            }
        } else if !line.trim().is_empty() {
            out.push(LogicalLine {
                start: n,
                end: n + 1,
                indent: line.len() - line.trim_start().len(),
                text: line.to_string(),
            });
        }
        continued = scan_line(&mut state, line);
    }
    out
}

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[ \t]*(?:async[ \t]+)?(def|class)[ \t]+([A-Za-z_][A-Za-z0-9_]*)").unwrap()
});

/// Text after the header's block colon, if any.
fn inline_body(header: &str) -> Option<String> {
    let mut quote: Option<(char, bool)> = None;
    let mut depth = 0usize;
    let mut comment = false;
    let mut iter = header.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if comment {
            comment = c != '\n';
            continue;
        }
        if let Some((q, triple)) = quote {
            if c == '\\' {
                iter.next();
            } else if c == q && (!triple || header[i..].starts_with(&format!("{q}{q}{q}"))) {
                quote = None;
                if triple {
                    iter.next();
                    iter.next();
                }
            }
            continue;
        }
        match c {
            '#' => comment = true,
            '\'' | '"' => {
                let triple = header[i..].starts_with(&format!("{c}{c}{c}"));
                quote = Some((c, triple));
                if triple {
                    iter.next();
                    iter.next();
                }
            }
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.saturating_sub(1),
            ':' if depth == 0 => {
                let rest = strip_comment(&header[i + 1..]);
                let rest = rest.trim();
                return (!rest.is_empty()).then(|| rest.to_string());
            }
            _ => {}
        }
    }
    None
}

/// Drop a trailing `#` comment that is not inside a string.
pub fn strip_comment(text: &str) -> String {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match (quote, c) {
            (Some(_), '\\') => escaped = true,
            (Some(q), _) if c == q => quote = None,
            (None, '\'' | '"') => quote = Some(c),
            (None, '#') => return text[..i].trim_end().to_string(),
            _ => {}
        }
    }
    text.trim_end().to_string()
}

fn is_stub_statement(stmt: &str) -> bool {
    let s = stmt.trim();
    if s.starts_with('#') || s == "pass" || s == "..." {
        return true;
    }
    if s.starts_with("raise NotImplementedError") {
        return true;
    }
    let body = s.trim_start_matches(['r', 'R', 'u', 'U', 'b', 'B', 'f', 'F']);
    let Some(q) = body.chars().next().filter(|c| *c == '"' || *c == '\'') else {
        return false;
    };
    // a bare string literal statement, closed at the very end
    let triple: String = std::iter::repeat_n(q, 3).collect();
    let strip = strip_comment(body);
    if strip.starts_with(&triple) {
        strip.len() >= 6 && strip.ends_with(&triple)
    } else {
        strip.len() >= 2 && strip.ends_with(q)
    }
}

fn blocks_in(lines: &[LogicalLine], from: usize, to: usize, indent: usize) -> Vec<Block> {
    let mut blocks = Vec::new();
    let mut i = from;
    while i < to {
        let line = &lines[i];
        let caps = (line.indent == indent && !line.is_comment())
            .then(|| HEADER.captures(&line.text))
            .flatten();
        let Some(caps) = caps else {
            i += 1;
            continue;
        };
        let kind = if &caps[1] == "class" {
            BlockKind::Class
        } else {
            BlockKind::Function
        };
        let mut start = line.start;
        let mut d = i;
        while d > from
            && lines[d - 1].indent == indent
            && lines[d - 1].text.trim_start().starts_with('@')
        {
            d -= 1;
            start = lines[d].start;
        }
        let mut j = i + 1;
        while j < to && (lines[j].indent > indent || lines[j].is_comment()) {
            j += 1;
        }
        // trailing comments at or left of the header belong to what follows
        let mut last = j;
        while last > i + 1 && lines[last - 1].is_comment() && lines[last - 1].indent <= indent {
            last -= 1;
        }
        let end = lines[last - 1].end;
        let child_indent = lines[i + 1..last]
            .iter()
            .find(|l| !l.is_comment())
            .map(|l| l.indent);
        let children = match child_indent {
            Some(ci) => blocks_in(lines, i + 1, last, ci),
            None => Vec::new(),
        };
        let statements = lines[i + 1..last]
            .iter()
            .filter(|l| {
                !l.is_comment()
                    && !children
                        .iter()
                        .any(|c| l.start >= c.start && l.end <= c.end)
            })
            .map(|l| l.text.trim().to_string())
            .collect();
        blocks.push(Block {
            name: caps[2].to_string(),
            kind,
            indent,
            start,
            end,
            inline_body: inline_body(&line.text),
            statements,
            children,
        });
        i = j;
    }
    blocks
}

/// Top-level class and function blocks in file order.
pub fn top_level_blocks(src: &str) -> Vec<Block> {
    let lines = logical_lines(src);
    blocks_in(&lines, 0, lines.len(), 0)
}

/// Top-level statements that are neither blocks, imports nor comments.
pub fn top_level_statements(src: &str) -> Vec<LogicalLine> {
    let lines = logical_lines(src);
    let blocks = blocks_in(&lines, 0, lines.len(), 0);
    lines
        .into_iter()
        .filter(|l| {
            l.indent == 0
                && !l.is_comment()
                && !blocks.iter().any(|b| l.start >= b.start && l.end <= b.end)
                && import_statements(&l.text).is_empty()
        })
        .collect()
}

/// Body text of each top-level `if __name__ == "__main__":` block.
pub fn main_guards(src: &str) -> Vec<String> {
    let lines = logical_lines(src);
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        if l.indent != 0 || !l.text.starts_with("if __name__") {
            continue;
        }
        let mut body: Vec<&str> = inline_body(&l.text)
            .map(|_| l.text.as_str())
            .into_iter()
            .collect();
        body.extend(
            lines[i + 1..]
                .iter()
                .take_while(|n| n.indent > 0 || n.is_comment())
                .map(|n| n.text.as_str()),
        );
        out.push(body.join("\n"));
    }
    out
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical import statements in one logical line, one per imported name.
fn import_statements(text: &str) -> Vec<String> {
    let t = strip_comment(text.trim());
    let t = normalize_ws(&t.replace(['(', ')', '\\'], " "));
    if let Some(rest) = t.strip_prefix("import ") {
        return rest
            .split(',')
            .map(normalize_ws)
            .filter(|n| !n.is_empty())
            .map(|n| format!("import {n}"))
            .collect();
    }
    if let Some(rest) = t.strip_prefix("from ") {
        if let Some((module, names)) = rest.split_once(" import ") {
            return names
                .split(',')
                .map(normalize_ws)
                .filter(|n| !n.is_empty())
                .map(|n| format!("from {} import {n}", module.trim()))
                .collect();
        }
    }
    Vec::new()
}

/// Module-level imports, one canonical entry per imported name.
pub fn imports(src: &str) -> BTreeSet<String> {
    logical_lines(src)
        .iter()
        .filter(|l| l.indent == 0)
        .flat_map(|l| import_statements(&l.text))
        .collect()
}

/// Physical line index just past the last module-level import, if any.
pub fn import_block_end(src: &str) -> Option<usize> {
    logical_lines(src)
        .iter()
        .filter(|l| l.indent == 0 && !import_statements(&l.text).is_empty())
        .map(|l| l.end)
        .next_back()
}
