use std::collections::BTreeMap;
use std::fmt::Write;

use repro_core::artifacts::ArtifactDir;
use repro_core::codegen::{FillRecord, FillStatus, FILL_LOG_FILE};
use repro_core::fingerprint::{
    Fingerprint, GuideUnit, FINGERPRINT_FILE, GUIDES_FILE, WARNINGS_FILE,
};
use repro_core::gateway::CostReport;
use repro_core::reflect::{LoopTrace, LOOP_TRACE_FILE};
use repro_core::scoring::{pass_curve, ScoreReport, SCORE_REPORT_FILE};
use repro_core::Warning;
use serde::de::DeserializeOwned;

use crate::commands::{score_summary, COSTS_FILE, SCORE_WARNINGS_FILE};
use crate::error::CliError;
use crate::manifest::RunManifest;

pub const REPORT_FILE: &str = "report.md";

fn load<T: DeserializeOwned>(dir: &ArtifactDir, rel: &str) -> Result<Option<T>, CliError> {
    if dir.exists(rel) {
        Ok(Some(dir.read_json(rel)?))
    } else {
        Ok(None)
    }
}

fn warning_counts(warnings: &[Warning]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for w in warnings {
        *out.entry(format!("{}/{}", w.stage, w.kind)).or_insert(0) += 1;
    }
    out
}

/// Markdown summary of everything present in a run directory.
pub fn render_report(dir: &ArtifactDir, manifest: &RunManifest) -> Result<String, CliError> {
    let mut out = String::from("# Run report\n\n");
    let _ = writeln!(out, "Run directory: `{}`  ", dir.root().display());
    let _ = writeln!(out, "Created: {}  ", manifest.created_at);
    let _ = writeln!(out, "Updated: {}\n", manifest.updated_at);

    out.push_str("## Stages\n\n| stage | completed |\n|---|---|\n");
    for (name, rec) in &manifest.stages {
        let _ = writeln!(out, "| {name} | {} |", rec.completed_at);
    }
    out.push('\n');

    let fingerprint: Option<Fingerprint> = load(dir, FINGERPRINT_FILE)?;
    if let Some(fp) = &fingerprint {
        let c = fp.stage_counts;
        out.push_str("## Fingerprint\n\n| step | count |\n|---|---|\n");
        let _ = writeln!(out, "| guides | {} |", c.guides);
        let _ = writeln!(out, "| standardized | {} |", c.standardized);
        let _ = writeln!(out, "| after dedup | {} |", c.after_dedup);
        let _ = writeln!(out, "| final | {} |\n", c.final_count);
    }

    let trace: Option<LoopTrace> = load(dir, LOOP_TRACE_FILE)?;
    if let Some(t) = &trace {
        out.push_str(
            "## Reflection\n\n| iteration | passed | total | ratio |\n|---|---|---|---|\n",
        );
        for p in pass_curve(t) {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.4} |",
                p.iteration, p.pass_count, p.total, p.ratio
            );
        }
        let reason = serde_json::to_value(t.terminal_reason)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "\nTerminal reason: {reason}  \nBest iteration: {}  \nFinal iteration: {}",
            t.best_iteration, t.final_iteration
        );
        if let Some(e) = &t.error {
            let _ = writeln!(out, "Stopped early: {e}");
        }
        out.push('\n');
    }

    let score: Option<ScoreReport> = load(dir, SCORE_REPORT_FILE)?;
    if let Some(s) = &score {
        out.push_str("## Score\n\n```\n");
        out.push_str(&score_summary(s));
        out.push_str("```\n\n");
    }

    let costs: Option<CostReport> = load(dir, COSTS_FILE)?;
    if let Some(c) = &costs {
        out.push_str("## Cost\n\n| purpose | calls | prompt tokens | completion tokens | cost |\n|---|---|---|---|---|\n");
        for (purpose, t) in &c.per_purpose {
            let _ = writeln!(
                out,
                "| {purpose} | {} | {} | {} | {:.6} |",
                t.calls, t.prompt_tokens, t.completion_tokens, t.cost
            );
        }
        let _ = writeln!(
            out,
            "| **total** | {} | | | {:.6} |\n",
            c.calls, c.total_cost
        );
    }

    let mut lines: Vec<String> = Vec::new();
    if let Some(guides) = load::<Vec<GuideUnit>>(dir, GUIDES_FILE)? {
        let misses = guides.iter().filter(|g| g.grounding_miss).count();
        if misses > 0 {
            lines.push(format!(
                "- grounding misses: {misses} of {} guides",
                guides.len()
            ));
        }
    }
    if let Some(ws) = load::<Vec<Warning>>(dir, WARNINGS_FILE)? {
        for (kind, n) in warning_counts(&ws) {
            lines.push(format!("- {kind}: {n}"));
        }
    }
    if let Some(log) = load::<Vec<FillRecord>>(dir, FILL_LOG_FILE)? {
        for r in log.iter().filter(|r| r.status == FillStatus::Failed) {
            lines.push(format!(
                "- fill failed: {}::{}{}",
                r.file,
                r.symbol,
                r.error
                    .as_deref()
                    .map(|e| format!(" ({e})"))
                    .unwrap_or_default()
            ));
        }
    }
    if let Some(t) = &trace {
        let all: Vec<Warning> = t
            .iterations
            .iter()
            .flat_map(|r| r.warnings.iter().cloned())
            .collect();
        for (kind, n) in warning_counts(&all) {
            lines.push(format!("- {kind}: {n}"));
        }
    }
    if let Some(ws) = load::<Vec<Warning>>(dir, SCORE_WARNINGS_FILE)? {
        for (kind, n) in warning_counts(&ws) {
            lines.push(format!("- {kind}: {n}"));
        }
    }
    out.push_str("## Warnings\n\n");
    if lines.is_empty() {
        out.push_str("none\n");
    } else {
        out.push_str(&lines.join("\n"));
        out.push('\n');
    }
    Ok(out)
}
