//! The verify → plan → refine loop over a code workspace.

pub mod prompts;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::artifacts::ArtifactDir;
use crate::fingerprint::Criterion;
use crate::gateway::structured::{parse_code_files, parse_plan_document, CodeFile, PlanDocument};
use crate::gateway::{AskError, Gateway, GatewayError, Purpose};
use crate::parallel::map_bounded;
use crate::workspace::{Workspace, CONFIG_FILE};
use crate::{StageError, Warning, MAX_REPROMPTS};

pub const LOOP_TRACE_FILE: &str = "loop_trace.json";
pub const UNPARSEABLE_FINDINGS: &str = "verification unparseable";

pub fn verdicts_file(iteration: u32) -> String {
    format!("iter_{iteration}/verdicts.json")
}

pub fn plan_file(iteration: u32) -> String {
    format!("iter_{iteration}/plan.md")
}

pub fn workspace_dir(iteration: u32) -> String {
    format!("workspace_iter{iteration}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion_id: String,
    pub expected: String,
    pub findings: String,
    pub reasoning: String,
    pub score: u8,
    pub iteration: u32,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.score == 1
    }

    fn fail_closed(
        criterion: &Criterion,
        iteration: u32,
        findings: &str,
        reasoning: String,
    ) -> Self {
        Self {
            criterion_id: criterion.id.clone(),
            expected: criterion.rendered.clone(),
            findings: findings.to_string(),
            reasoning,
            score: 0,
            iteration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub max_iterations: u32,
    pub verify_parallelism: usize,
    pub feedback_batch_size: usize,
    /// characters of paper text included in verify and refine prompts
    pub paper_context_chars: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 4,
            verify_parallelism: 8,
            feedback_batch_size: 40,
            paper_context_chars: 24_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    AllPass,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub pass_count: usize,
    pub total: usize,
    pub verdicts: Vec<Verdict>,
    pub plan: Option<PlanDocument>,
    pub changed_files: Vec<String>,
    /// a revised workspace was produced after this verification round
    pub revised: bool,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub iterations: Vec<IterationRecord>,
    pub terminal_reason: TerminalReason,
    /// set when planning or refinement failed and the loop stopped early
    pub error: Option<String>,
    /// workspace iteration with the highest pass count (earliest on ties)
    pub best_iteration: u32,
    pub final_iteration: u32,
}

impl LoopTrace {
    pub fn verification_rounds(&self) -> usize {
        self.iterations.len()
    }

    pub fn revisions(&self) -> usize {
        self.iterations.iter().filter(|r| r.revised).count()
    }
}

static SECTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?im)^[ \t>#*_]*(expected implementation|actual findings|verification result)[ \t*_:]*$",
    )
    .unwrap()
});
static SCORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bscore\b[ \t*_:=]*(?:is|of)?[ \t*_:=]*([01])\b").unwrap());
static BARE_SCORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[ \t*_]*([01])[ \t*_.]*$").unwrap());

#[derive(Debug)]
struct Parsed {
    expected: String,
    findings: String,
    reasoning: String,
    score: u8,
}

fn parse_verification(reply: &str) -> Result<Parsed, String> {
    let marks: Vec<(usize, usize, String)> = SECTION
        .captures_iter(reply)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].to_lowercase())
        })
        .collect();
    let section = |name: &str| -> Option<String> {
        let i = marks.iter().position(|m| m.2 == name)?;
        let end = marks.get(i + 1).map_or(reply.len(), |m| m.0);
        let text = reply[marks[i].1..end].trim().to_string();
        (!text.is_empty()).then_some(text)
    };
    let mut missing = Vec::new();
    let expected = section("expected implementation");
    let findings = section("actual findings");
    let result = section("verification result");
    for (name, s) in [
        ("Expected Implementation", &expected),
        ("Actual Findings", &findings),
        ("Verification Result", &result),
    ] {
        if s.is_none() {
            missing.push(name);
        }
    }
    if !missing.is_empty() {
        return Err(format!("missing or empty sections: {}", missing.join(", ")));
    }
    let result = result.unwrap();
    let score = SCORE
        .captures_iter(&result)
        .last()
        .or_else(|| result.lines().find_map(|l| BARE_SCORE.captures(l)))
        .map(|c| if &c[1] == "1" { 1 } else { 0 })
        .ok_or("the Verification Result has no `score: 0` or `score: 1`")?;
    Ok(Parsed {
        expected: expected.unwrap(),
        findings: findings.unwrap(),
        reasoning: result,
        score,
    })
}

/// Judge one criterion. Unparseable replies and transport failures fail
/// closed with score 0; a replay miss propagates.
pub fn verify_criterion(
    ws: &Workspace,
    criterion: &Criterion,
    paper_context: &str,
    gw: &Gateway,
    iteration: u32,
) -> Result<Verdict, GatewayError> {
    let req = gw
        .request(Purpose::Verify)
        .system(prompts::VERIFY_SYSTEM)
        .user(format!(
            "# Paper\n\n{paper_context}\n\n# Submission\n\n{}\n# Criterion\n\n{}\n",
            ws.render(),
            criterion.rendered
        ));
    match gw.ask(req, MAX_REPROMPTS, parse_verification) {
        Ok(a) => Ok(Verdict {
            criterion_id: criterion.id.clone(),
            expected: a.value.expected,
            findings: a.value.findings,
            reasoning: a.value.reasoning,
            score: a.value.score,
            iteration,
        }),
        Err(AskError::Unparseable { reason, .. }) => {
            log::warn!(
                "{}: verification unparseable, failing closed: {reason}",
                criterion.id
            );
            Ok(Verdict::fail_closed(
                criterion,
                iteration,
                UNPARSEABLE_FINDINGS,
                reason,
            ))
        }
        Err(AskError::Gateway(e)) if e.is_replay_miss() => Err(e),
        Err(AskError::Gateway(e)) => {
            log::warn!("{}: verification failed, failing closed: {e}", criterion.id);
            Ok(Verdict::fail_closed(
                criterion,
                iteration,
                "verification unavailable",
                e.to_string(),
            ))
        }
    }
}

/// One verdict per criterion, in criterion order.
pub fn verify_all(
    ws: &Workspace,
    criteria: &[Criterion],
    paper_context: &str,
    gw: &Gateway,
    cfg: &LoopConfig,
    iteration: u32,
) -> Result<Vec<Verdict>, GatewayError> {
    map_bounded(cfg.verify_parallelism.max(1), criteria, |c| {
        verify_criterion(ws, c, paper_context, gw, iteration)
    })
    .into_iter()
    .collect()
}

fn feedback_text(batch: &[&Verdict], criteria: &[Criterion]) -> String {
    let mut out = String::new();
    for v in batch {
        let rendered = criteria
            .iter()
            .find(|c| c.id == v.criterion_id)
            .map_or("", |c| c.rendered.as_str());
        out.push_str(&format!(
            "#### Criterion {}: {rendered}\nExpected: {}\nFindings: {}\nResult: {}\n\n",
            v.criterion_id, v.expected, v.findings, v.reasoning
        ));
    }
    out
}

/// Plan from the failing verdicts, batched; batch plans merge in order. A
/// batch whose reply never parses is skipped with a warning; the stage fails
/// only when no batch produced a plan.
pub fn plan_revision(
    verdicts: &[Verdict],
    criteria: &[Criterion],
    ws: &Workspace,
    gw: &Gateway,
    cfg: &LoopConfig,
) -> Result<(PlanDocument, Vec<Warning>), StageError> {
    let failing: Vec<&Verdict> = verdicts.iter().filter(|v| !v.passed()).collect();
    let mut plan = PlanDocument::default();
    let mut warnings = Vec::new();
    if failing.is_empty() {
        return Ok((plan, warnings));
    }
    let code = ws.render();
    let mut parsed_any = false;
    for (b, batch) in failing.chunks(cfg.feedback_batch_size.max(1)).enumerate() {
        let req = gw
            .request(Purpose::Plan)
            .system(prompts::PLAN_SYSTEM)
            .user(format!(
                "EVALUATION FEEDBACK\n---\n{}---\n\nCURRENT CODE PROJECT\n---\n{code}---\n",
                feedback_text(batch, criteria)
            ));
        match gw.ask(req, MAX_REPROMPTS, |t| {
            parse_plan_document(t).map_err(|e| e.reason)
        }) {
            Ok(a) => {
                plan.merge(a.value);
                parsed_any = true;
            }
            Err(AskError::Gateway(e)) => return Err(e.into()),
            Err(AskError::Unparseable { reason, .. }) => warnings.push(Warning::new(
                "reflect",
                "plan_batch_failed",
                format!("feedback batch {}: {reason}", b + 1),
            )),
        }
    }
    if !parsed_any {
        return Err(StageError::failed(
            "plan",
            "no feedback batch produced a plan",
        ));
    }
    Ok((plan, warnings))
}

fn missing_originals(ws: &Workspace, files: &[CodeFile]) -> Vec<String> {
    ws.files
        .keys()
        .filter(|p| {
            !files
                .iter()
                .any(|f| f.path.trim_start_matches("./") == p.as_str())
        })
        .cloned()
        .collect()
}

/// Ask the editor for the full revised project. Original files the reply
/// leaves out are carried forward; new files are kept only when the plan
/// names them.
pub fn apply_revision(
    ws: &Workspace,
    plan: &PlanDocument,
    paper_context: &str,
    gw: &Gateway,
) -> Result<(Workspace, Vec<Warning>), StageError> {
    let req = gw
        .request(Purpose::Refine)
        .system(prompts::REFINE_SYSTEM)
        .user(format!(
            "# Paper\n\n{paper_context}\n\n# Revision plan\n\n{}\n# Current project\n\n{}",
            plan.to_markdown(),
            ws.render()
        ));
    let parse = |reply: &str| {
        let files = parse_code_files(reply).map_err(|e| e.reason)?;
        let missing = missing_originals(ws, &files);
        if missing.is_empty() {
            Ok(files)
        } else {
            Err(format!(
                "the reply leaves out {}; return every file",
                missing.join(", ")
            ))
        }
    };
    let mut warnings = Vec::new();
    let files = match gw.ask(req, MAX_REPROMPTS, parse) {
        Ok(a) => a.value,
        Err(AskError::Gateway(e)) => return Err(e.into()),
        Err(AskError::Unparseable { raw, reason, .. }) => match parse_code_files(&raw) {
            Ok(files) => {
                for path in missing_originals(ws, &files) {
                    warnings.push(Warning::new(
                        "reflect",
                        "file_carried_forward",
                        format!("{path} missing from the revision; keeping the prior version"),
                    ));
                }
                files
            }
            Err(_) => return Err(StageError::failed("apply", reason)),
        },
    };

    let mut next = ws.clone();
    for f in files {
        let known = ws.files.contains_key(f.path.trim_start_matches("./")) || f.path == CONFIG_FILE;
        let planned = plan.file_plans.iter().any(|p| p.path == f.path);
        if !known && !planned {
            warnings.push(Warning::new(
                "reflect",
                "unplanned_file",
                format!("{} is not in the plan; ignored", f.path),
            ));
            continue;
        }
        if let Err(e) = next.insert(&f.path, &f.content) {
            warnings.push(Warning::new("reflect", "invalid_path", e.to_string()));
        }
    }
    Ok((next, warnings))
}

/// Iterate until every criterion passes or `max_iterations` verification
/// rounds have run. Artifacts are written per iteration when `out` is given.
pub fn reflect_loop(
    initial: Workspace,
    criteria: &[Criterion],
    paper_context: &str,
    gw: &Gateway,
    cfg: &LoopConfig,
    out: Option<&ArtifactDir>,
) -> Result<(Workspace, LoopTrace), StageError> {
    if cfg.max_iterations < 1 {
        return Err(StageError::failed(
            "reflect",
            "max_iterations must be at least 1",
        ));
    }
    let mut ws = initial;
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut terminal = TerminalReason::MaxIterations;
    let mut error = None;

    for k in 0..cfg.max_iterations {
        let verdicts = verify_all(&ws, criteria, paper_context, gw, cfg, k)?;
        if let Some(dir) = out {
            dir.write_json(&verdicts_file(k), &verdicts)?;
        }
        let pass_count = verdicts.iter().filter(|v| v.passed()).count();
        let mut record = IterationRecord {
            iteration: k,
            pass_count,
            total: criteria.len(),
            verdicts,
            plan: None,
            changed_files: Vec::new(),
            revised: false,
            warnings: Vec::new(),
        };
        log::info!(
            "iteration {k}: {pass_count}/{} criteria pass",
            criteria.len()
        );
        if pass_count == criteria.len() {
            terminal = TerminalReason::AllPass;
            iterations.push(record);
            break;
        }
        if k + 1 == cfg.max_iterations {
            iterations.push(record);
            break;
        }

        let revised =
            plan_revision(&record.verdicts, criteria, &ws, gw, cfg).and_then(|(plan, mut w)| {
                record.warnings.append(&mut w);
                if let Some(dir) = out {
                    dir.write_text(&plan_file(k), &plan.to_markdown())?;
                }
                record.plan = Some(plan.clone());
                if plan.is_empty() {
                    return Ok(ws.clone());
                }
                let (next, mut w) = apply_revision(&ws, &plan, paper_context, gw)?;
                record.warnings.append(&mut w);
                Ok(next)
            });
        match revised {
            Ok(next) => {
                record.changed_files = ws.changed_paths(&next);
                record.revised = true;
                ws = next;
                if let Some(dir) = out {
                    dir.write_workspace(&workspace_dir(k + 1), &ws)?;
                }
                iterations.push(record);
            }
            Err(e) if e.is_replay_miss() => return Err(e),
            Err(e) => {
                record
                    .warnings
                    .push(Warning::new("reflect", "loop_stopped", e.to_string()));
                error = Some(e.to_string());
                iterations.push(record);
                break;
            }
        }
    }

    let best_iteration = iterations
        .iter()
        .max_by(|a, b| {
            a.pass_count
                .cmp(&b.pass_count)
                .then(b.iteration.cmp(&a.iteration))
        })
        .map_or(0, |r| r.iteration);
    let final_iteration = iterations.last().map_or(0, |r| r.iteration);
    let trace = LoopTrace {
        iterations,
        terminal_reason: terminal,
        error,
        best_iteration,
        final_iteration,
    };
    if let Some(dir) = out {
        dir.write_json(LOOP_TRACE_FILE, &trace)?;
    }
    Ok((ws, trace))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::scripted::{FnBackend, ScriptedBackend};
    use crate::gateway::{BackendError, ChatRequest, HashEmbedder, Mode, RetryPolicy};

    fn crit(id: &str, fact: &str) -> Criterion {
        Criterion {
            id: id.into(),
            fact: fact.into(),
            scope: None,
            rendered: format!("<fact>{fact}</fact>"),
            origin_guide_id: "g".into(),
            source: None,
        }
    }

    fn verification(score: u8) -> String {
        format!(
            "**Expected Implementation**\nThe optimizer is Adam.\n\n**Actual Findings**\n\
             The trainer builds torch.optim.Adam.\n\n**Verification Result**\nscore: {score}\n\
             The code matches."
        )
    }

    fn ws() -> Workspace {
        let mut w = Workspace::new();
        w.insert("main.py", "print('a')\n").unwrap();
        w.insert("model.py", "class Model:\n    pass\n").unwrap();
        w.config_doc = "lr: 0.1\n".into();
        w
    }

    fn gateway(chat: Arc<dyn crate::gateway::ChatBackend>) -> Gateway {
        Gateway::builder(Mode::Live)
            .chat(chat)
            .embedder(Arc::new(HashEmbedder::new(8)))
            .retry(RetryPolicy::no_delay(0))
            .build()
    }

    #[test]
    fn parses_three_sections() {
        let p = parse_verification(&verification(1)).unwrap();
        assert_eq!(p.score, 1);
        assert_eq!(p.expected, "The optimizer is Adam.");
        assert!(p.reasoning.contains("The code matches."));
        assert_eq!(parse_verification(&verification(0)).unwrap().score, 0);
        let headed = "## Expected Implementation\na\n## Actual Findings\nb\n## Verification Result\nScore: **1**\n";
        assert_eq!(parse_verification(headed).unwrap().score, 1);
        let bare =
            "Expected Implementation:\na\nActual Findings:\nb\nVerification Result:\n0\nMissing.";
        assert_eq!(parse_verification(bare).unwrap().score, 0);
    }

    #[test]
    fn rejects_missing_parts() {
        let no_score = verification(1).replace("score: 1", "looks right");
        assert!(parse_verification(&no_score).unwrap_err().contains("score"));
        let two = verification(1).replace("score: 1", "score: 2");
        assert!(parse_verification(&two).is_err());
        let no_findings = "**Expected Implementation**\na\n**Verification Result**\nscore: 1\n";
        assert!(parse_verification(no_findings)
            .unwrap_err()
            .contains("Actual Findings"));
    }

    #[test]
    fn unparseable_verification_fails_closed() {
        let b = Arc::new(ScriptedBackend::new());
        for _ in 0..3 {
            b.push(Purpose::Verify, "It is probably fine.");
        }
        let gw = gateway(b.clone());
        let v = verify_criterion(&ws(), &crit("c1", "Adam"), "", &gw, 0).unwrap();
        assert_eq!(v.score, 0);
        assert_eq!(v.findings, UNPARSEABLE_FINDINGS);
        assert!(!v.expected.is_empty() && !v.reasoning.is_empty());
        assert_eq!(b.call_count(), 3);
    }

    #[test]
    fn transport_failure_fails_closed() {
        let b = Arc::new(ScriptedBackend::new());
        b.push_error(Purpose::Verify, BackendError::Transient("503".into()));
        let v = verify_criterion(&ws(), &crit("c1", "Adam"), "", &gateway(b), 0).unwrap();
        assert_eq!(v.score, 0);
    }

    fn by_fact(scores: &'static [(&'static str, u8)]) -> Arc<dyn crate::gateway::ChatBackend> {
        Arc::new(FnBackend(move |req: &ChatRequest| {
            let user = req.last_user();
            let score = scores
                .iter()
                .find(|(f, _)| user.contains(&format!("<fact>{f}</fact>")))
                .map_or(0, |s| s.1);
            Ok(verification(score))
        }))
    }

    #[test]
    fn verify_all_keeps_criterion_order() {
        let criteria = [crit("c1", "a"), crit("c2", "b"), crit("c3", "c")];
        let chat = by_fact(&[("a", 1), ("b", 0), ("c", 1)]);
        let gw = gateway(chat);
        for parallelism in [1, 4] {
            let cfg = LoopConfig {
                verify_parallelism: parallelism,
                ..LoopConfig::default()
            };
            let v = verify_all(&ws(), &criteria, "", &gw, &cfg, 0).unwrap();
            let got: Vec<(&str, u8)> = v
                .iter()
                .map(|v| (v.criterion_id.as_str(), v.score))
                .collect();
            assert_eq!(got, [("c1", 1), ("c2", 0), ("c3", 1)]);
        }
        assert!(verify_all(&ws(), &[], "", &gw, &LoopConfig::default(), 0)
            .unwrap()
            .is_empty());
    }

    const PLAN: &str = "### CONFIG_PLAN\n1. Set `lr` to 0.01.\n\n### CODE_PLAN\n## Code: main.py\n\
                        1. Print b instead of a.\n\n## Code: utils.py\n1. Add a seed helper.\n";

    #[test]
    fn planner_sees_only_failures_in_batches() {
        let b = Arc::new(ScriptedBackend::new());
        b.push(Purpose::Plan, PLAN);
        b.push(Purpose::Plan, "### CONFIG_PLAN\nNo changes needed for config.yaml\n### CODE_PLAN\n## Code: model.py\n1. Add a layer.\n");
        let criteria: Vec<Criterion> = (0..5)
            .map(|i| crit(&format!("c{i}"), &format!("f{i}")))
            .collect();
        let verdicts: Vec<Verdict> = criteria
            .iter()
            .enumerate()
            .map(|(i, c)| Verdict {
                score: (i == 0) as u8,
                ..Verdict::fail_closed(c, 0, "x", "y".into())
            })
            .collect();
        let cfg = LoopConfig {
            feedback_batch_size: 2,
            ..LoopConfig::default()
        };
        // 4 failures in batches of 2 -> 2 planner calls
        let (plan, w) =
            plan_revision(&verdicts, &criteria, &ws(), &gateway(b.clone()), &cfg).unwrap();
        assert!(w.is_empty());
        assert_eq!(b.call_count(), 2);
        let first = b.calls()[0].last_user().to_string();
        assert!(!first.contains("Criterion c0:"));
        assert!(first.contains("Criterion c1:") && first.contains("Criterion c2:"));
        assert_eq!(plan.config_steps, vec!["Set `lr` to 0.01."]);
        let paths: Vec<&str> = plan.file_plans.iter().map(|p| p.path.as_str()).collect();
        assert_eq!(paths, ["main.py", "utils.py", "model.py"]);
    }

    #[test]
    fn failed_plan_batch_is_skipped() {
        let b = Arc::new(ScriptedBackend::new());
        for _ in 0..3 {
            b.push(Purpose::Plan, "Just fix it.");
        }
        b.push(Purpose::Plan, PLAN);
        let criteria: Vec<Criterion> = (0..2).map(|i| crit(&format!("c{i}"), "f")).collect();
        let verdicts: Vec<Verdict> = criteria
            .iter()
            .map(|c| Verdict::fail_closed(c, 0, "x", "y".into()))
            .collect();
        let cfg = LoopConfig {
            feedback_batch_size: 1,
            ..LoopConfig::default()
        };
        let (plan, w) = plan_revision(&verdicts, &criteria, &ws(), &gateway(b), &cfg).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(plan.file_plans.len(), 2);
    }

    fn project(files: &[(&str, &str)]) -> String {
        files
            .iter()
            .map(|(p, c)| format!("## Code: {p}\n```python\n{c}```\n\n"))
            .collect()
    }

    #[test]
    fn apply_changes_one_file() {
        let b = Arc::new(ScriptedBackend::new());
        b.push(
            Purpose::Refine,
            project(&[
                ("main.py", "print('b')\n"),
                ("model.py", "class Model:\n    pass\n"),
            ]),
        );
        let plan = parse_plan_document(PLAN).unwrap();
        let (next, w) = apply_revision(&ws(), &plan, "", &gateway(b)).unwrap();
        assert!(w.is_empty());
        assert_eq!(ws().changed_paths(&next), vec!["main.py"]);
    }

    #[test]
    fn omitted_file_is_carried_forward() {
        let b = Arc::new(ScriptedBackend::new());
        for _ in 0..3 {
            b.push(
                Purpose::Refine,
                project(&[("model.py", "class Model:\n    x = 1\n")]),
            );
        }
        let plan = parse_plan_document(PLAN).unwrap();
        let (next, w) = apply_revision(&ws(), &plan, "", &gateway(b.clone())).unwrap();
        assert_eq!(b.call_count(), 3);
        assert_eq!(next.get("main.py"), Some("print('a')\n"));
        assert_eq!(next.get("model.py"), Some("class Model:\n    x = 1\n"));
        assert!(w
            .iter()
            .any(|w| w.kind == "file_carried_forward" && w.message.contains("main.py")));
    }

    #[test]
    fn planned_new_files_and_config_are_accepted() {
        let b = Arc::new(ScriptedBackend::new());
        b.push(
            Purpose::Refine,
            project(&[
                ("main.py", "print('a')\n"),
                ("model.py", "class Model:\n    pass\n"),
                ("utils.py", "def seed():\n    return 0\n"),
                ("extra.py", "x = 1\n"),
                ("config.yaml", "lr: 0.01\n"),
            ]),
        );
        let plan = parse_plan_document(PLAN).unwrap();
        let (next, w) = apply_revision(&ws(), &plan, "", &gateway(b)).unwrap();
        assert!(next.get("utils.py").is_some());
        assert!(next.get("extra.py").is_none());
        assert_eq!(next.config_doc, "lr: 0.01\n");
        assert_eq!(w.len(), 1);
        let original: std::collections::BTreeSet<_> = ws().files.keys().cloned().collect();
        assert!(original.iter().all(|p| next.files.contains_key(p)));
    }

    /// Scripted model: verification passes iff the fact text occurs in the
    /// submission; the editor appends every planned step to main.py.
    fn fixing_model(fix: bool) -> Arc<dyn crate::gateway::ChatBackend> {
        Arc::new(FnBackend(move |req: &ChatRequest| {
            let user = req.last_user();
            let text = match req.purpose {
                Purpose::Verify => {
                    let fact = user
                        .split("<fact>")
                        .nth(1)
                        .and_then(|s| s.split("</fact>").next())
                        .unwrap_or("");
                    let submission = user.split("# Criterion").next().unwrap_or("");
                    verification(submission.contains(fact) as u8)
                }
                Purpose::Plan => {
                    let ids: Vec<String> = user
                        .lines()
                        .filter_map(|l| l.strip_prefix("#### Criterion "))
                        .filter_map(|l| l.split("<fact>").nth(1))
                        .filter_map(|l| l.split("</fact>").next())
                        .map(|f| format!("1. Add {f}"))
                        .collect();
                    format!("### CONFIG_PLAN\nNo changes needed for config.yaml\n### CODE_PLAN\n## Code: main.py\n{}\n", ids.join("\n"))
                }
                Purpose::Refine => {
                    let main = "print('a')\n";
                    let added: String = if fix {
                        user.lines()
                            .filter_map(|l| l.strip_prefix("1. Add "))
                            .map(|f| format!("# {f}\n"))
                            .collect()
                    } else {
                        String::new()
                    };
                    project(&[
                        ("main.py", &format!("{main}{added}")),
                        ("model.py", "class Model:\n    pass\n"),
                    ])
                }
                _ => return Err(BackendError::Fatal("unexpected".into())),
            };
            Ok(text)
        }))
    }

    #[test]
    fn loop_stops_immediately_when_all_pass() {
        let criteria = [crit("c1", "print")];
        let gw = gateway(fixing_model(true));
        let (_, trace) =
            reflect_loop(ws(), &criteria, "", &gw, &LoopConfig::default(), None).unwrap();
        assert_eq!(trace.verification_rounds(), 1);
        assert_eq!(trace.revisions(), 0);
        assert_eq!(trace.terminal_reason, TerminalReason::AllPass);
    }

    #[test]
    fn loop_fail_then_pass() {
        let criteria = [crit("c1", "print"), crit("c2", "dropout 0.5")];
        let dir = tempfile::tempdir().unwrap();
        let art = ArtifactDir::new(dir.path());
        let gw = gateway(fixing_model(true));
        let (final_ws, trace) =
            reflect_loop(ws(), &criteria, "", &gw, &LoopConfig::default(), Some(&art)).unwrap();
        assert_eq!(trace.verification_rounds(), 2);
        assert_eq!(trace.revisions(), 1);
        assert_eq!(trace.terminal_reason, TerminalReason::AllPass);
        assert_eq!(trace.iterations[0].pass_count, 1);
        assert_eq!(trace.iterations[0].changed_files, vec!["main.py"]);
        assert!(final_ws.get("main.py").unwrap().contains("dropout 0.5"));
        for f in [
            "iter_0/verdicts.json",
            "iter_0/plan.md",
            "workspace_iter1/main.py",
            "iter_1/verdicts.json",
            LOOP_TRACE_FILE,
        ] {
            assert!(art.exists(f), "{f}");
        }
        assert_eq!(trace.best_iteration, 1);
    }

    #[test]
    fn loop_never_passing_runs_max_iterations() {
        let criteria = [crit("c1", "dropout 0.5")];
        let gw = gateway(fixing_model(false));
        let (_, trace) =
            reflect_loop(ws(), &criteria, "", &gw, &LoopConfig::default(), None).unwrap();
        assert_eq!(trace.verification_rounds(), 4);
        assert_eq!(trace.revisions(), 3);
        assert_eq!(trace.terminal_reason, TerminalReason::MaxIterations);
        assert!(trace.error.is_none());
        assert_eq!(trace.best_iteration, 0);
    }

    #[test]
    fn plan_failure_stops_with_error_flag() {
        let b = Arc::new(ScriptedBackend::new());
        b.push(Purpose::Verify, verification(0));
        for _ in 0..3 {
            b.push(Purpose::Plan, "no idea");
        }
        let (out, trace) = reflect_loop(
            ws(),
            &[crit("c1", "x")],
            "",
            &gateway(b),
            &LoopConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(out, ws());
        assert_eq!(trace.terminal_reason, TerminalReason::MaxIterations);
        assert!(trace.error.is_some());
        assert_eq!(trace.verification_rounds(), 1);
    }
}
