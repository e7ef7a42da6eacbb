//! The five commands: analyze, triage, batch, ablate and replay.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use warnmend_core::analyzer::analyze;
use warnmend_core::approver::{Approver, CheckSet};
use warnmend_core::edit::{apply_to_text, FixSpec, LineShiftMap};
use warnmend_core::gateway::{cost, HttpGateway, LanguageModel, ScriptedGateway, TokenUsage};
use warnmend_core::model::{AnalysisReport, CycleCounts, RunOutcome, RunStatus, Verdict, Warning};
use warnmend_core::subagents::{default_classification, process_warning, revalidate_fix, Session};
use warnmend_core::trajectory::Trajectory;
use warnmend_core::workspace::ProjectHandle;

use crate::config::{CommitPolicy, Config, GatewayKind};

/// Where a run writes its artifacts.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> OutputLayout {
        OutputLayout { root: root.into() }
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.jsonl")
    }

    pub fn trajectory(&self, w: &Warning) -> PathBuf {
        self.root.join("trajectories").join(format!("{}.jsonl", w.slug()))
    }

    pub fn outcome(&self, w: &Warning) -> PathBuf {
        self.root.join("outcomes").join(format!("{}.json", w.slug()))
    }

    pub fn patch(&self, w: &Warning) -> PathBuf {
        self.root.join("patches").join(format!("{}.diff", w.slug()))
    }

    pub fn staged(&self, w: &Warning) -> PathBuf {
        self.root.join("staged").join(w.slug())
    }

    pub fn summary_json(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn summary_text(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
}

fn write(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn check_output_outside(project_root: &Path, output: &Path) -> Result<()> {
    let root = project_root
        .canonicalize()
        .with_context(|| format!("project root {} does not exist", project_root.display()))?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let out = output.canonicalize()?;
    if out.starts_with(&root) {
        bail!(
            "the output directory {} lies inside the project; choose one outside it",
            output.display()
        );
    }
    Ok(())
}

/// Runs the analyzer and writes the report.
pub fn cmd_analyze(project_root: &Path, config: &Config, out: Option<&Path>) -> Result<(AnalysisReport, PathBuf)> {
    let report = analyze(project_root, &config.analyzer)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            check_output_outside(project_root, &config.run.output_dir)?;
            OutputLayout::new(&config.run.output_dir).report()
        }
    };
    write(&path, &report.to_jsonl())?;
    info!(warnings = report.len(), path = %path.display(), "analysis report written");
    Ok((report, path))
}

/// Picks warnings by any combination of file, line and rule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selector {
    pub file: Option<String>,
    pub line: Option<u32>,
    pub rule: Option<String>,
}

impl Selector {
    pub fn matches(&self, w: &Warning) -> bool {
        self.file
            .as_ref()
            .is_none_or(|f| &w.file_path == f || w.file_path.ends_with(&format!("/{f}")))
            && self.line.is_none_or(|l| w.start_line == l)
            && self
                .rule
                .as_ref()
                .is_none_or(|r| &w.rule_key == r || w.rule_key.rsplit(':').next() == Some(r.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectError {
    NoMatch,
    Ambiguous(Vec<String>),
}

impl fmt::Display for SelectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectError::NoMatch => write!(f, "no warning matches the selector"),
            SelectError::Ambiguous(matches) => {
                write!(f, "the selector matches {} warnings; narrow it down:", matches.len())?;
                for m in matches {
                    write!(f, "\n  {m}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for SelectError {}

pub fn select(report: &AnalysisReport, selector: &Selector) -> Result<Warning, SelectError> {
    let matches: Vec<&Warning> = report.warnings.iter().filter(|w| selector.matches(w)).collect();
    match matches.as_slice() {
        [] => Err(SelectError::NoMatch),
        [one] => Ok((*one).clone()),
        many => Err(SelectError::Ambiguous(
            many.iter().map(|w| format!("{} {}", w.location(), w.rule_key)).collect(),
        )),
    }
}

fn build_model(config: &Config, warning: &Warning) -> Result<Box<dyn LanguageModel>> {
    Ok(match config.gateway.kind {
        GatewayKind::Script => {
            let path = config.gateway.script.as_ref().context("no gateway.script configured")?;
            Box::new(ScriptedGateway::load(path)?)
        }
        GatewayKind::ScriptDir => {
            let dir = config.gateway.script_dir.as_ref().context("no gateway.script_dir configured")?;
            Box::new(ScriptedGateway::load(&dir.join(format!("{}.jsonl", warning.slug())))?)
        }
        GatewayKind::Http => Box::new(HttpGateway::new(config.gateway.http.clone().with_env())?),
    })
}

/// Outcome for a warning that could not be attempted at all.
fn error_outcome(warning: &Warning, message: String) -> RunOutcome {
    RunOutcome {
        warning: warning.clone(),
        classification: default_classification(&format!("not attempted: {message}"), &[None, None, None]),
        classification_budget_exhausted: false,
        final_fix: None,
        approved: false,
        status: RunStatus::Error(message),
        cycles_used: CycleCounts::default(),
        write_fix_calls: 0,
        last_feedback: None,
        token_usage: TokenUsage::default(),
        cost_usd: 0.0,
        wall_time: Default::default(),
    }
}

#[derive(Debug, Clone)]
pub struct WarningReport {
    pub outcome: RunOutcome,
    pub trajectory: Option<PathBuf>,
    pub outcome_path: PathBuf,
    pub patch: Option<PathBuf>,
    /// Line maps of an approved fix kept in the workspace.
    pub kept_maps: Option<BTreeMap<String, LineShiftMap>>,
}

/// Processes warnings one at a time against one project checkout.
pub struct Runner<'c> {
    config: &'c Config,
    layout: OutputLayout,
    root: PathBuf,
    docs_dir: PathBuf,
    approver: Approver,
    handle: Option<ProjectHandle>,
    policy: CommitPolicy,
}

impl<'c> Runner<'c> {
    pub fn new(project_root: &Path, config: &'c Config, checks: CheckSet, baseline: AnalysisReport, layout: OutputLayout) -> Runner<'c> {
        Runner {
            config,
            layout,
            root: project_root.to_path_buf(),
            docs_dir: config.docs_dir(project_root),
            approver: Approver::new(config.analyzer.clone(), baseline, checks.config()),
            handle: Some(ProjectHandle::new(project_root, config.project.profile.clone())),
            policy: config.run.commit_policy,
        }
    }

    fn with_policy(mut self, policy: CommitPolicy) -> Runner<'c> {
        self.policy = policy;
        self
    }

    pub fn baseline(&self) -> &AnalysisReport {
        &self.approver.baseline
    }

    pub fn process(&mut self, warning: &Warning) -> Result<WarningReport> {
        info!(warning = %warning.location(), rule = %warning.rule_key, "processing");
        let outcome_path = self.layout.outcome(warning);
        let model = match build_model(self.config, warning) {
            Ok(m) => m,
            Err(e) => {
                warn!(error = %e, "gateway unavailable");
                let outcome = error_outcome(warning, format!("{e:#}"));
                write(&outcome_path, &serde_json::to_string_pretty(&outcome)?)?;
                return Ok(WarningReport {
                    outcome,
                    trajectory: None,
                    outcome_path,
                    patch: None,
                    kept_maps: None,
                });
            }
        };
        let mut session = Session {
            model: model.as_ref(),
            handle: self.handle.take().expect("handle present between runs"),
            approver: self.approver.clone(),
            docs_dir: self.docs_dir.clone(),
            config: self.config.run_config(),
        };
        let run = process_warning(warning, &mut session);
        let mut handle = session.handle;

        let trajectory = self.layout.trajectory(warning);
        Trajectory::from_run(&run).write(&trajectory)?;
        write(&outcome_path, &serde_json::to_string_pretty(&run.outcome)?)?;

        let mut patch = None;
        let mut kept_maps = None;
        if run.outcome.approved {
            let path = self.layout.patch(warning);
            write(&path, &handle.diff_against_pristine(self.config.run.patch_context))?;
            patch = Some(path);
            match self.policy {
                CommitPolicy::Revert => handle.rollback()?,
                CommitPolicy::Stage => {
                    let staged = self.layout.staged(warning);
                    for file in handle.modified_files() {
                        let target = staged.join(&file);
                        fs::create_dir_all(target.parent().expect("file has a parent"))?;
                        fs::copy(self.root.join(&file), &target)?;
                    }
                    handle.rollback()?;
                }
                CommitPolicy::Keep => {
                    let fix = run.outcome.final_fix.as_ref().expect("approved outcomes carry a fix");
                    kept_maps = Some(maps_from_pristine(&handle, fix));
                    handle.commit()?;
                    self.approver.baseline = analyze(&self.root, &self.config.analyzer)?;
                }
            }
        } else {
            handle.rollback()?;
        }
        self.handle = Some(handle);
        info!(status = ?run.outcome.status, cost = run.outcome.cost_usd, "done");
        Ok(WarningReport {
            outcome: run.outcome,
            trajectory: Some(trajectory),
            outcome_path,
            patch,
            kept_maps,
        })
    }
}

fn maps_from_pristine(handle: &ProjectHandle, fix: &FixSpec) -> BTreeMap<String, LineShiftMap> {
    fix.files
        .iter()
        .filter_map(|entry| {
            let original = String::from_utf8_lossy(handle.pristine_content(&entry.file_name)?).into_owned();
            Some((entry.file_name.clone(), apply_to_text(&original, entry).1))
        })
        .collect()
}

pub fn cmd_triage(project_root: &Path, selector: &Selector, config: &Config) -> Result<WarningReport> {
    check_output_outside(project_root, &config.run.output_dir)?;
    let report = analyze(project_root, &config.analyzer)?;
    let warning = select(&report, selector)?;
    let layout = OutputLayout::new(&config.run.output_dir);
    let mut runner = Runner::new(project_root, config, config.check_set()?, report, layout);
    runner.process(&warning)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub warning: String,
    pub rule: String,
    pub verdict: Option<Verdict>,
    /// `approved`, `not_approved`, `error` or `skipped`.
    pub status: String,
    pub detail: Option<String>,
    pub classification_cycles: u32,
    pub repair_cycles: u32,
    pub write_fix_calls: u32,
    pub cost_usd: f64,
}

impl SummaryRow {
    fn from_outcome(o: &RunOutcome) -> SummaryRow {
        let (status, detail) = match &o.status {
            RunStatus::Approved => ("approved", None),
            RunStatus::NotApproved => ("not_approved", None),
            RunStatus::Error(m) => ("error", Some(m.clone())),
        };
        SummaryRow {
            warning: o.warning.location(),
            rule: o.warning.rule_key.clone(),
            verdict: Some(o.classification.verdict),
            status: status.into(),
            detail,
            classification_cycles: o.cycles_used.classification,
            repair_cycles: o.cycles_used.repair,
            write_fix_calls: o.write_fix_calls,
            cost_usd: o.cost_usd,
        }
    }

    fn skipped(w: &Warning, reason: &str) -> SummaryRow {
        SummaryRow {
            warning: w.location(),
            rule: w.rule_key.clone(),
            verdict: None,
            status: "skipped".into(),
            detail: Some(reason.into()),
            classification_cycles: 0,
            repair_cycles: 0,
            write_fix_calls: 0,
            cost_usd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub processed: usize,
    pub plausible: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub errors: usize,
    pub skipped: usize,
    pub token_usage: TokenUsage,
    pub total_cost_usd: f64,
    pub mean_cost_usd: f64,
}

impl Summary {
    pub fn new(rows: Vec<SummaryRow>, token_usage: TokenUsage) -> Summary {
        let processed: Vec<&SummaryRow> = rows.iter().filter(|r| r.status != "skipped").collect();
        let total_cost_usd: f64 = processed.iter().map(|r| r.cost_usd).sum();
        Summary {
            processed: processed.len(),
            plausible: processed.iter().filter(|r| r.status == "approved").count(),
            true_positives: processed.iter().filter(|r| r.verdict == Some(Verdict::TruePositive)).count(),
            false_positives: processed.iter().filter(|r| r.verdict == Some(Verdict::FalsePositive)).count(),
            errors: processed.iter().filter(|r| r.status == "error").count(),
            skipped: rows.len() - processed.len(),
            token_usage,
            total_cost_usd,
            mean_cost_usd: if processed.is_empty() {
                0.0
            } else {
                total_cost_usd / processed.len() as f64
            },
            rows,
        }
    }

    pub fn headline(&self) -> String {
        format!("{}/{} plausible", self.plausible, self.processed)
    }

    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.warning.len()).max().unwrap_or(7).max(7);
        let mut out = format!(
            "{:<width$}  {:<12}  {:<7}  {:<12}  {:>6}  {:>9}\n",
            "warning", "rule", "verdict", "status", "cycles", "cost"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:<12}  {:<7}  {:<12}  {:>6}  {:>9}\n",
                r.warning,
                r.rule,
                r.verdict.map_or("-", Verdict::short),
                r.status,
                format!("{}+{}", r.classification_cycles, r.repair_cycles),
                format!("${:.4}", r.cost_usd),
            ));
        }
        out.push_str(&format!(
            "\n{}; TP {} / FP {}; errors {}; skipped {}; total ${:.4}, mean ${:.4} per warning\n",
            self.headline(),
            self.true_positives,
            self.false_positives,
            self.errors,
            self.skipped,
            self.total_cost_usd,
            self.mean_cost_usd
        ));
        out
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub summary: Summary,
    pub reports: Vec<WarningReport>,
}

fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

fn relocate(w: &Warning, maps: &BTreeMap<String, LineShiftMap>, baseline: &AnalysisReport) -> Option<Warning> {
    let line = match maps.get(&w.file_path) {
        Some(m) => m.forward(w.start_line)?,
        None => w.start_line,
    };
    baseline
        .warnings
        .iter()
        .find(|n| n.file_path == w.file_path && n.rule_key == w.rule_key && n.start_line == line)
        .cloned()
}

fn run_batch(
    project_root: &Path,
    config: &Config,
    checks: CheckSet,
    layout: &OutputLayout,
    jobs: usize,
    policy: CommitPolicy,
) -> Result<BatchResult> {
    let report = analyze(project_root, &config.analyzer)?;
    write(&layout.report(), &report.to_jsonl())?;
    let warnings = report.warnings.clone();
    let mut slots: Vec<Option<std::result::Result<WarningReport, SummaryRow>>> = vec![None; warnings.len()];

    if jobs > 1 && policy == CommitPolicy::Keep {
        bail!("the keep commit policy needs sequential processing; drop --jobs");
    }
    if jobs > 1 && warnings.len() > 1 {
        let jobs = jobs.min(warnings.len());
        let results: Vec<Result<Vec<(usize, WarningReport)>>> = thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let report = report.clone();
                    let warnings = &warnings;
                    scope.spawn(move || -> Result<Vec<(usize, WarningReport)>> {
                        let clone = tempfile::tempdir()?;
                        copy_tree(project_root, clone.path())?;
                        let mut runner = Runner::new(clone.path(), config, checks, report, layout.clone()).with_policy(policy);
                        let mut out = Vec::new();
                        for i in (j..warnings.len()).step_by(jobs) {
                            out.push((i, runner.process(&warnings[i])?));
                        }
                        Ok(out)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            for (i, wr) in r? {
                slots[i] = Some(Ok(wr));
            }
        }
    } else {
        let mut runner = Runner::new(project_root, config, checks, report, layout.clone()).with_policy(policy);
        let mut pending: Vec<Option<Warning>> = warnings.iter().cloned().map(Some).collect();
        for i in 0..warnings.len() {
            let Some(current) = pending[i].clone() else {
                slots[i] = Some(Err(SummaryRow::skipped(&warnings[i], "no longer reported after an earlier fix")));
                continue;
            };
            let wr = runner.process(&current)?;
            if let Some(maps) = &wr.kept_maps {
                for later in pending.iter_mut().skip(i + 1) {
                    *later = later.as_ref().and_then(|w| relocate(w, maps, runner.baseline()));
                }
            }
            slots[i] = Some(Ok(wr));
        }
    }

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut usage = TokenUsage::default();
    for slot in slots.into_iter().flatten() {
        match slot {
            Ok(wr) => {
                usage += wr.outcome.token_usage;
                rows.push(SummaryRow::from_outcome(&wr.outcome));
                reports.push(wr);
            }
            Err(row) => rows.push(row),
        }
    }
    let summary = Summary::new(rows, usage);
    debug_assert_eq!(summary.total_cost_usd > 0.0, cost(&usage, &config.pricing) > 0.0);
    write(&layout.summary_json(), &serde_json::to_string_pretty(&summary)?)?;
    write(&layout.summary_text(), &summary.render_table())?;
    Ok(BatchResult { summary, reports })
}

/// Classifies and repairs every warning of the project's report.
pub fn cmd_batch(project_root: &Path, config: &Config, jobs: usize) -> Result<BatchResult> {
    check_output_outside(project_root, &config.run.output_dir)?;
    let layout = OutputLayout::new(&config.run.output_dir);
    run_batch(project_root, config, config.check_set()?, &layout, jobs, config.run.commit_policy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub check_set: String,
    pub processed: usize,
    pub approved: usize,
    /// Approved under this check set but rejected by the full one.
    pub wrongly_accepted: usize,
    pub wrongly_accepted_warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, set: CheckSet) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.check_set == set.as_str())
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<28}  {:>9}  {:>16}\n", "checks", "approved", "wrongly accepted");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<28}  {:>9}  {:>16}\n",
                r.check_set,
                format!("{}/{}", r.approved, r.processed),
                r.wrongly_accepted
            ));
        }
        out
    }
}

/// Runs the batch once per check set and re-checks every fix approved under
/// a reduced set with all checks enabled.
pub fn cmd_ablate(project_root: &Path, config: &Config, sets: &[CheckSet]) -> Result<AblationReport> {
    check_output_outside(project_root, &config.run.output_dir)?;
    let base = OutputLayout::new(&config.run.output_dir);
    let baseline = analyze(project_root, &config.analyzer)?;
    let full = Approver::new(config.analyzer.clone(), baseline, CheckSet::Full.config());
    let mut rows = Vec::new();
    for &set in sets {
        info!(checks = set.as_str(), "ablation run");
        let layout = OutputLayout::new(base.root.join("ablation").join(set.as_str()));
        let batch = run_batch(project_root, config, set, &layout, 1, CommitPolicy::Revert)?;
        let mut handle = ProjectHandle::new(project_root, config.project.profile.clone());
        let mut wrong = Vec::new();
        for wr in batch.reports.iter().filter(|r| r.outcome.approved) {
            let fix = wr.outcome.final_fix.as_ref().expect("approved outcomes carry a fix");
            let verdict = revalidate_fix(&mut handle, fix, &wr.outcome.warning, &full)?;
            if !verdict.approved {
                wrong.push(wr.outcome.warning.location());
            }
        }
        rows.push(AblationRow {
            check_set: set.as_str().into(),
            processed: batch.summary.processed,
            approved: batch.summary.plausible,
            wrongly_accepted: wrong.len(),
            wrongly_accepted_warnings: wrong,
        });
    }
    let report = AblationReport { rows };
    write(&base.root.join("ablation.json"), &serde_json::to_string_pretty(&report)?)?;
    write(&base.root.join("ablation.txt"), &report.render_table())?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub outcome: RunOutcome,
    pub recorded: Option<RunOutcome>,
    pub matches: bool,
}

/// Re-runs a persisted trajectory through the runtime against the project.
pub fn cmd_replay(project_root: &Path, trajectory: &Path, config: &Config) -> Result<ReplayResult> {
    let recorded = Trajectory::read(trajectory)?;
    let baseline = analyze(project_root, &config.analyzer)?;
    let script = recorded.replay_script();
    let mut session = Session {
        model: &script,
        handle: ProjectHandle::new(project_root, config.project.profile.clone()),
        approver: Approver::new(config.analyzer.clone(), baseline, config.check_set()?.config()),
        docs_dir: config.docs_dir(project_root),
        config: config.run_config(),
    };
    let run = process_warning(&recorded.warning, &mut session);
    session.handle.rollback()?;
    let matches = recorded.outcome.as_ref().is_some_and(|o| o.same_result(&run.outcome));
    Ok(ReplayResult {
        outcome: run.outcome,
        recorded: recorded.outcome,
        matches,
    })
}
