use std::path::{Path, PathBuf};

use repro_core::artifacts::ArtifactDir;
use repro_core::codegen::{generate_initial, FILL_LOG_FILE, WORKSPACE_ITER0};
use repro_core::fingerprint::{
    build_fingerprint, Fingerprint, GuideUnit, CLUSTERS_FILE, CRITERIA_RAW_FILE, FINGERPRINT_FILE,
    GUIDES_FILE, WARNINGS_FILE,
};
use repro_core::gateway::CostReport;
use repro_core::paper::load_paper_file;
use repro_core::reflect::{
    plan_file, reflect_loop, verdicts_file, workspace_dir, LoopTrace, LOOP_TRACE_FILE,
};
use repro_core::scoring::{
    grade_rubric, match_fingerprint_to_rubric, pass_curve, pr_leaf, score_rubric, RubricError,
    RubricNode, ScoreReport, SCORE_REPORT_FILE,
};
use repro_core::{Gateway, Mode, PaperDoc, PaperError, Warning};
use serde_json::{json, Value};

use crate::config::{build_gateway, Backends, RunConfig};
use crate::error::CliError;
use crate::manifest::{digest, file_hash, RunLock, RunManifest};
use crate::report::{render_report, REPORT_FILE};
use crate::{Cli, Command};

pub const COSTS_FILE: &str = "costs.json";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const FINAL_WORKSPACE: &str = "workspace_final";
pub const GRADED_RUBRIC_FILE: &str = "rubric_graded.json";
pub const SCORE_WARNINGS_FILE: &str = "score_warnings.json";

const FINGERPRINT_ARTIFACTS: [&str; 5] = [
    GUIDES_FILE,
    CRITERIA_RAW_FILE,
    CLUSTERS_FILE,
    WARNINGS_FILE,
    FINGERPRINT_FILE,
];

/// What a command did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub ran: Vec<String>,
    pub skipped: Vec<String>,
    /// chat completions served by the gateway during this command
    pub model_requests: usize,
    /// requests that reached a live backend (chat and embedding)
    pub backend_calls: u64,
    pub summary: String,
}

struct Session<'a> {
    cfg: Option<RunConfig>,
    mode: Mode,
    resume: bool,
    dir: ArtifactDir,
    manifest: RunManifest,
    backends: &'a Backends,
    gw: Option<Gateway>,
    requests_before: usize,
    outcome: Outcome,
}

fn resolve_run_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    cli.run_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.run_dir.clone()))
        .ok_or_else(|| {
            CliError::input("no run directory: pass --run-dir or set run_dir in the config")
        })
}

impl<'a> Session<'a> {
    fn open(
        cli: &Cli,
        cfg: Option<RunConfig>,
        backends: &'a Backends,
    ) -> Result<(Self, RunLock), CliError> {
        let run_dir = resolve_run_dir(cli, cfg.as_ref())?;
        let mode = cli
            .mode
            .map(Mode::from)
            .or_else(|| cfg.as_ref().map(|c| c.mode))
            .unwrap_or(Mode::Live);
        let lock = RunLock::acquire(&run_dir)?;
        let dir = ArtifactDir::new(&run_dir);
        let snapshot = cfg.as_ref().map_or(Value::Null, |c| {
            serde_json::to_value(c).unwrap_or(Value::Null)
        });
        let manifest = match RunManifest::load(&dir)? {
            Some(mut m) => {
                if !snapshot.is_null() {
                    m.config = snapshot;
                }
                m
            }
            None => RunManifest::new(snapshot),
        };
        let session = Self {
            cfg,
            mode,
            resume: cli.resume,
            dir,
            manifest,
            backends,
            gw: None,
            requests_before: 0,
            outcome: Outcome::default(),
        };
        Ok((session, lock))
    }

    fn cfg(&self) -> &RunConfig {
        self.cfg.as_ref().expect("command requires a config")
    }

    fn transcripts(&self) -> PathBuf {
        self.cfg()
            .transcripts
            .clone()
            .unwrap_or_else(|| self.dir.path(TRANSCRIPTS_FILE))
    }

    fn ensure_gateway(&mut self) -> Result<(), CliError> {
        if self.gw.is_some() {
            return Ok(());
        }
        let previous: Option<CostReport> = if self.dir.exists(COSTS_FILE) {
            self.dir.read_json(COSTS_FILE).ok()
        } else {
            None
        };
        self.requests_before = previous.as_ref().map_or(0, |p| p.entries.len());
        self.gw = Some(build_gateway(
            self.cfg(),
            self.mode,
            &self.transcripts(),
            self.backends,
            previous,
        )?);
        Ok(())
    }

    fn gw(&self) -> &Gateway {
        self.gw.as_ref().expect("gateway initialised")
    }

    /// Persist costs and the manifest; called after every stage.
    fn checkpoint(&mut self) -> Result<(), CliError> {
        if let Some(gw) = &self.gw {
            self.dir.write_json(COSTS_FILE, &gw.cost_report())?;
        }
        self.manifest.save(&self.dir)
    }

    fn complete(
        &mut self,
        stage: &str,
        input_digest: &str,
        artifacts: &[String],
    ) -> Result<(), CliError> {
        self.manifest
            .mark_complete(stage, input_digest, artifacts, &self.dir)?;
        self.outcome.ran.push(stage.to_string());
        self.checkpoint()
    }

    fn skip(&mut self, stage: &str) {
        log::info!("{stage}: complete in manifest, skipping");
        self.outcome.skipped.push(stage.to_string());
    }

    fn finish(mut self) -> Result<Outcome, CliError> {
        self.checkpoint()?;
        if let Some(gw) = &self.gw {
            self.outcome.model_requests = gw.billed_calls().saturating_sub(self.requests_before);
            self.outcome.backend_calls = gw.backend_calls();
        }
        Ok(self.outcome)
    }

    fn hash(&self, rel: &str) -> Result<String, CliError> {
        Ok(self.dir.hash(rel)?)
    }
}

fn load_doc(cfg: &RunConfig) -> Result<(PaperDoc, String), CliError> {
    let path = &cfg.paper_path;
    if !path.is_file() {
        return Err(CliError::input(format!(
            "paper not found: {}",
            path.display()
        )));
    }
    let doc = load_paper_file(path).map_err(|e| match e {
        PaperError::EmptyDocument => CliError::input(format!("paper {} is empty", path.display())),
        other => CliError::input(other.to_string()),
    })?;
    Ok((doc, file_hash(path)?))
}

fn require_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Err(CliError::input("this command needs --config <path>")),
    }
}

pub fn execute(cli: &Cli, backends: &Backends) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Fingerprint => cmd_fingerprint(cli, backends),
        Command::Reproduce { from_scratch } => cmd_reproduce(cli, backends, *from_scratch),
        Command::Score {
            rubric,
            grade,
            match_fingerprint,
        } => cmd_score(cli, backends, rubric.as_deref(), *grade, *match_fingerprint),
        Command::Report => cmd_report(cli),
    }
}

fn fingerprint_digest(cfg: &RunConfig, paper_hash: &str) -> String {
    digest(&json!({
        "stage": "fingerprint",
        "paper": paper_hash,
        "config": cfg.fingerprint,
        "analysis_model": cfg.models.analysis_model,
        "embed_model": cfg.embed_model(),
    }))
}

fn run_fingerprint(
    s: &mut Session<'_>,
    doc: &PaperDoc,
    input_digest: &str,
) -> Result<Fingerprint, CliError> {
    s.ensure_gateway()?;
    let run = build_fingerprint(doc, s.gw(), &s.cfg().fingerprint, Some(&s.dir))?;
    let artifacts: Vec<String> = FINGERPRINT_ARTIFACTS
        .iter()
        .map(|a| a.to_string())
        .collect();
    s.complete("fingerprint", input_digest, &artifacts)?;
    Ok(run.fingerprint)
}

fn fingerprint_summary(fp: &Fingerprint) -> String {
    let c = fp.stage_counts;
    format!(
        "fingerprint: {} guides, {} standardized, {} after dedup, {} final criteria\n",
        c.guides, c.standardized, c.after_dedup, c.final_count
    )
}

pub fn cmd_fingerprint(cli: &Cli, backends: &Backends) -> Result<Outcome, CliError> {
    let cfg = require_config(cli)?;
    let (doc, paper_hash) = load_doc(&cfg)?;
    let (mut s, _lock) = Session::open(cli, Some(cfg), backends)?;
    let d = fingerprint_digest(s.cfg(), &paper_hash);
    let fp = if s.manifest.is_complete("fingerprint", &d, &s.dir) {
        s.skip("fingerprint");
        s.dir.read_json(FINGERPRINT_FILE)?
    } else {
        run_fingerprint(&mut s, &doc, &d)?
    };
    s.outcome.summary = fingerprint_summary(&fp);
    s.finish()
}

fn codegen_digest(s: &Session<'_>, paper_hash: &str) -> Result<String, CliError> {
    let cfg = s.cfg();
    Ok(digest(&json!({
        "stage": "codegen",
        "paper": paper_hash,
        "guides": if s.dir.exists(GUIDES_FILE) { s.hash(GUIDES_FILE)? } else { String::new() },
        "config": cfg.codegen,
        "coding_model": cfg.models.coding_model,
    })))
}

fn reflect_digest(s: &Session<'_>, paper_hash: &str) -> Result<String, CliError> {
    let cfg = s.cfg();
    let hash_or_empty = |rel: &str| -> Result<String, CliError> {
        if s.dir.exists(rel) {
            s.hash(rel)
        } else {
            Ok(String::new())
        }
    };
    Ok(digest(&json!({
        "stage": "reflect",
        "paper": paper_hash,
        "fingerprint": hash_or_empty(FINGERPRINT_FILE)?,
        "workspace": hash_or_empty(WORKSPACE_ITER0)?,
        "config": cfg.loop_cfg,
        "analysis_model": cfg.models.analysis_model,
        "coding_model": cfg.models.coding_model,
    })))
}

/// Per-iteration outputs of an earlier reflection attempt.
fn clear_iterations(dir: &ArtifactDir) -> Result<(), CliError> {
    let Ok(entries) = std::fs::read_dir(dir.root()) else {
        return Ok(());
    };
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().to_string();
        let stale = name == FINAL_WORKSPACE
            || name
                .strip_prefix("iter_")
                .is_some_and(|k| k.parse::<u32>().is_ok())
            || name
                .strip_prefix("workspace_iter")
                .and_then(|k| k.parse::<u32>().ok())
                .is_some_and(|k| k > 0);
        if stale && entry.path().is_dir() {
            std::fs::remove_dir_all(entry.path()).map_err(|e| {
                CliError::Stage(format!("cannot clear {}: {e}", entry.path().display()))
            })?;
        }
    }
    Ok(())
}

fn reflect_artifacts(trace: &LoopTrace, dir: &ArtifactDir) -> Vec<String> {
    let mut out = vec![LOOP_TRACE_FILE.to_string(), FINAL_WORKSPACE.to_string()];
    for r in &trace.iterations {
        out.push(verdicts_file(r.iteration));
        for rel in [plan_file(r.iteration), workspace_dir(r.iteration + 1)] {
            if dir.exists(&rel) {
                out.push(rel);
            }
        }
    }
    out
}

fn reproduce_summary(trace: &LoopTrace) -> String {
    let last = trace.iterations.last();
    format!(
        "reproduce: {} after {} verification round(s), {} revision(s); final {}/{} criteria pass; best iteration {}\n",
        serde_json::to_value(trace.terminal_reason)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        trace.verification_rounds(),
        trace.revisions(),
        last.map_or(0, |r| r.pass_count),
        last.map_or(0, |r| r.total),
        trace.best_iteration,
    )
}

pub fn cmd_reproduce(
    cli: &Cli,
    backends: &Backends,
    from_scratch: bool,
) -> Result<Outcome, CliError> {
    let cfg = require_config(cli)?;
    let (doc, paper_hash) = load_doc(&cfg)?;
    let (mut s, _lock) = Session::open(cli, Some(cfg), backends)?;

    let fp_digest = fingerprint_digest(s.cfg(), &paper_hash);
    let fp_done = s.manifest.is_complete("fingerprint", &fp_digest, &s.dir);
    if !from_scratch && !fp_done {
        return Err(CliError::input(
            "no current fingerprint in the run directory; run `repro fingerprint` first or pass --from-scratch",
        ));
    }
    let all_done = fp_done
        && s.manifest
            .is_complete("codegen", &codegen_digest(&s, &paper_hash)?, &s.dir)
        && s.manifest
            .is_complete("reflect", &reflect_digest(&s, &paper_hash)?, &s.dir);
    // without --resume an unfinished run restarts every stage of this command
    let reuse = all_done || s.resume;

    let mut summary = String::new();
    if from_scratch {
        let fp = if reuse && fp_done {
            s.skip("fingerprint");
            s.dir.read_json(FINGERPRINT_FILE)?
        } else {
            run_fingerprint(&mut s, &doc, &fp_digest)?
        };
        summary.push_str(&fingerprint_summary(&fp));
    }

    let cg_digest = codegen_digest(&s, &paper_hash)?;
    if reuse && s.manifest.is_complete("codegen", &cg_digest, &s.dir) {
        s.skip("codegen");
    } else {
        s.manifest.forget("reflect");
        s.ensure_gateway()?;
        let guides: Vec<GuideUnit> = s.dir.read_json(GUIDES_FILE)?;
        generate_initial(&doc, &guides, s.gw(), &s.cfg().codegen, Some(&s.dir))?;
        s.complete(
            "codegen",
            &cg_digest,
            &[WORKSPACE_ITER0.to_string(), FILL_LOG_FILE.to_string()],
        )?;
    }

    let rf_digest = reflect_digest(&s, &paper_hash)?;
    let trace: LoopTrace = if reuse && s.manifest.is_complete("reflect", &rf_digest, &s.dir) {
        s.skip("reflect");
        s.dir.read_json(LOOP_TRACE_FILE)?
    } else {
        s.ensure_gateway()?;
        clear_iterations(&s.dir)?;
        let fingerprint: Fingerprint = s.dir.read_json(FINGERPRINT_FILE)?;
        let initial = s.dir.read_workspace(WORKSPACE_ITER0)?;
        let context = doc.context_text(s.cfg().loop_cfg.paper_context_chars);
        let (ws, trace) = reflect_loop(
            initial,
            &fingerprint.criteria,
            &context,
            s.gw(),
            &s.cfg().loop_cfg,
            Some(&s.dir),
        )?;
        s.dir.write_workspace(FINAL_WORKSPACE, &ws)?;
        let artifacts = reflect_artifacts(&trace, &s.dir);
        s.complete("reflect", &rf_digest, &artifacts)?;
        trace
    };
    summary.push_str(&reproduce_summary(&trace));
    s.outcome.summary = summary;
    s.finish()
}

fn read_rubric(path: &Path) -> Result<RubricNode, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read rubric {}: {e}", path.display())))?;
    let rubric: RubricNode = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("malformed rubric {}: {e}", path.display())))?;
    rubric
        .validate()
        .map_err(|e| CliError::input(format!("malformed rubric {}: {e}", path.display())))?;
    Ok(rubric)
}

fn rubric_error(e: RubricError) -> CliError {
    CliError::input(format!("rubric cannot be scored: {e}"))
}

fn percent(x: f64) -> String {
    format!("{x:.4} ({:.2}%)", x * 100.0)
}

pub fn score_summary(report: &ScoreReport) -> String {
    let mut out = String::new();
    if let Some(root) = report.pr_root {
        out.push_str(&format!("PR_root: {}\n", percent(root)));
    }
    if let Some(leaf) = report.pr_leaf {
        out.push_str(&format!("PR_leaf: {}\n", percent(leaf)));
    }
    if !report.pass_curve.is_empty() {
        let points: Vec<String> = report
            .pass_curve
            .iter()
            .map(|p| format!("{}:{}/{}", p.iteration, p.pass_count, p.total))
            .collect();
        out.push_str(&format!("pass curve: {}\n", points.join(" ")));
    }
    if let Some(best) = report.best_iteration {
        out.push_str(&format!("best iteration: {best}\n"));
    }
    if let Some(m) = &report.match_report {
        out.push_str(&format!(
            "fingerprint recall: {} ({} of {} requirements)\nfingerprint precision: {} ({} of {} criteria)\n",
            percent(m.recall),
            m.rubric_covered,
            m.rubric_total,
            percent(m.precision),
            m.fp_matching,
            m.fp_total
        ));
    }
    out
}

pub fn cmd_score(
    cli: &Cli,
    backends: &Backends,
    rubric_flag: Option<&Path>,
    grade: bool,
    match_fingerprint: bool,
) -> Result<Outcome, CliError> {
    let cfg = require_config(cli)?;
    let rubric_path = rubric_flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.rubric_path.clone())
        .ok_or_else(|| {
            CliError::input("no rubric: pass --rubric or set rubric_path in the config")
        })?;
    let rubric = read_rubric(&rubric_path)?;
    let rubric_hash = file_hash(&rubric_path)?;
    let (mut s, _lock) = Session::open(cli, Some(cfg), backends)?;

    let optional_hash = |rel: &str| -> Result<Option<String>, CliError> {
        if s.dir.exists(rel) {
            s.hash(rel).map(Some)
        } else {
            Ok(None)
        }
    };
    if grade && !s.dir.exists(FINAL_WORKSPACE) {
        return Err(CliError::input(
            "no final workspace to grade; run `repro reproduce` first",
        ));
    }
    if match_fingerprint && !s.dir.exists(FINGERPRINT_FILE) {
        return Err(CliError::input(
            "no fingerprint to match; run `repro fingerprint` first",
        ));
    }
    let d = digest(&json!({
        "stage": "score",
        "rubric": rubric_hash,
        "grade": grade,
        "match": match_fingerprint,
        "workspace": if grade { optional_hash(FINAL_WORKSPACE)? } else { None },
        "fingerprint": if match_fingerprint { optional_hash(FINGERPRINT_FILE)? } else { None },
        "loop_trace": optional_hash(LOOP_TRACE_FILE)?,
        "analysis_model": s.cfg().models.analysis_model,
    }));
    if s.manifest.is_complete("score", &d, &s.dir) {
        s.skip("score");
        let report: ScoreReport = s.dir.read_json(SCORE_REPORT_FILE)?;
        s.outcome.summary = score_summary(&report);
        return s.finish();
    }

    let mut artifacts = vec![SCORE_REPORT_FILE.to_string()];
    let mut warnings: Vec<Warning> = Vec::new();
    let (graded, leaf_verdicts) = if grade {
        s.ensure_gateway()?;
        let (doc, _) = load_doc(s.cfg())?;
        let ws = s.dir.read_workspace(FINAL_WORKSPACE)?;
        let context = doc.context_text(s.cfg().loop_cfg.paper_context_chars);
        let (graded, verdicts) = grade_rubric(&rubric, &ws, &context, s.gw(), &s.cfg().loop_cfg)?;
        s.dir.write_json(GRADED_RUBRIC_FILE, &graded)?;
        artifacts.push(GRADED_RUBRIC_FILE.to_string());
        (graded, verdicts)
    } else {
        (rubric, Vec::new())
    };
    let pr_root = score_rubric(&graded).map_err(rubric_error)?;
    let scores: Vec<u8> = graded
        .leaves()
        .iter()
        .map(|l| l.score.unwrap_or(0))
        .collect();
    let pr_leaf_value = pr_leaf(&scores).map_err(rubric_error)?;

    let trace: Option<LoopTrace> = if s.dir.exists(LOOP_TRACE_FILE) {
        Some(s.dir.read_json(LOOP_TRACE_FILE)?)
    } else {
        None
    };
    let match_report = if match_fingerprint {
        s.ensure_gateway()?;
        let fp: Fingerprint = s.dir.read_json(FINGERPRINT_FILE)?;
        let requirements: Vec<String> = graded
            .leaves()
            .iter()
            .map(|l| l.requirement.clone().unwrap_or_else(|| l.id.clone()))
            .collect();
        let (report, mut w) = match_fingerprint_to_rubric(&fp.criteria, &requirements, s.gw())?;
        warnings.append(&mut w);
        Some(report)
    } else {
        None
    };
    if !warnings.is_empty() {
        s.dir.write_json(SCORE_WARNINGS_FILE, &warnings)?;
        artifacts.push(SCORE_WARNINGS_FILE.to_string());
    }

    let report = ScoreReport {
        pr_root: Some(pr_root),
        pr_leaf: Some(pr_leaf_value),
        leaf_verdicts,
        pass_curve: trace.as_ref().map(pass_curve).unwrap_or_default(),
        best_iteration: trace.as_ref().map(|t| t.best_iteration),
        match_report,
    };
    s.dir.write_json(SCORE_REPORT_FILE, &report)?;
    s.complete("score", &d, &artifacts)?;
    s.outcome.summary = score_summary(&report);
    s.finish()
}

pub fn cmd_report(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = match &cli.config {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let run_dir = resolve_run_dir(cli, cfg.as_ref())?;
    let probe = ArtifactDir::new(&run_dir);
    if RunManifest::load(&probe)?.is_none() {
        return Err(CliError::input(format!(
            "no run manifest in {}",
            run_dir.display()
        )));
    }
    let backends = Backends::default();
    let (mut s, _lock) = Session::open(cli, cfg, &backends)?;
    let text = render_report(&s.dir, &s.manifest)?;
    s.dir.write_text(REPORT_FILE, &text)?;
    let d = digest(&json!({"stage": "report", "report": s.hash(REPORT_FILE)?}));
    s.complete("report", &d, &[REPORT_FILE.to_string()])?;
    s.outcome.summary = format!("report written to {}\n", s.dir.path(REPORT_FILE).display());
    s.finish()
}
