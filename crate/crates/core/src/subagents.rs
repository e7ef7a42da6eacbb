//! End-to-end processing of one warning: classification, then repair.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::SuppressionSyntax;
use crate::approver::{ApprovalVerdict, Approver};
use crate::edit::{apply_fix, EditError, FixSpec};
use crate::gateway::{cost, LanguageModel, PricingModel, RetryPolicy, TokenUsage};
use crate::model::{Answer, Classification, CycleCounts, QuestionAnswer, RunOutcome, RunStatus, Verdict, Warning};
use crate::runtime::{
    run_agent, AgentEnv, AgentMode, AgentOutcome, AgentSettings, AgentState, CycleRecord, PromptTexts, CLASSIFICATION_BUDGET, REPAIR_BUDGET,
};
use crate::tools::{ToolContext, DEFAULT_HIT_CAP};
use crate::workspace::ProjectHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub classification_budget: u32,
    pub repair_budget: u32,
    pub urge_threshold: u32,
    pub token_cap: usize,
    pub chars_per_token: usize,
    pub hit_cap: usize,
    pub retry: RetryPolicy,
    pub pricing: PricingModel,
    pub texts: PromptTexts,
}

impl Default for RunConfig {
    fn default() -> Self {
        let agent = AgentSettings::default();
        RunConfig {
            classification_budget: CLASSIFICATION_BUDGET,
            repair_budget: REPAIR_BUDGET,
            urge_threshold: agent.urge_threshold,
            token_cap: agent.token_cap,
            chars_per_token: agent.chars_per_token,
            hit_cap: DEFAULT_HIT_CAP,
            retry: agent.retry,
            pricing: PricingModel::default(),
            texts: agent.texts,
        }
    }
}

impl RunConfig {
    pub fn settings(&self, mode: AgentMode) -> AgentSettings {
        AgentSettings {
            budget: if mode == AgentMode::Classify {
                self.classification_budget
            } else {
                self.repair_budget
            },
            urge_threshold: self.urge_threshold,
            token_cap: self.token_cap,
            chars_per_token: self.chars_per_token,
            retry: self.retry,
            texts: self.texts.clone(),
        }
    }
}

/// What one warning is processed against.
pub struct Session<'a> {
    pub model: &'a dyn LanguageModel,
    pub handle: ProjectHandle,
    pub approver: Approver,
    pub docs_dir: PathBuf,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRun {
    pub classification: Classification,
    pub budget_exhausted: bool,
    pub cycles: u32,
    pub usage: TokenUsage,
    pub records: Vec<CycleRecord>,
    pub error: Option<String>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarningRun {
    pub outcome: RunOutcome,
    /// Classification cycles followed by repair cycles.
    pub records: Vec<CycleRecord>,
}

pub const EXHAUSTED_RATIONALE: &str = "budget exhausted";

/// Classification used when the classifier ends without a verdict: a true
/// positive, keeping whatever answers were recorded.
pub fn default_classification(rationale: &str, answers: &[Option<QuestionAnswer>; 3]) -> Classification {
    let placeholder = |answer| QuestionAnswer {
        answer,
        explanation: "not answered before the classification ended".into(),
    };
    let fallback = [Answer::Yes, Answer::No, Answer::Yes];
    let question_answers = std::array::from_fn(|i| answers[i].clone().unwrap_or_else(|| placeholder(fallback[i])));
    Classification {
        verdict: Verdict::TruePositive,
        rationale: rationale.to_string(),
        question_answers,
    }
}

fn usage_of(records: &[CycleRecord]) -> TokenUsage {
    records.iter().fold(TokenUsage::default(), |acc, r| acc + r.usage)
}

fn take_handle(session: &mut Session<'_>) -> ProjectHandle {
    let placeholder = ProjectHandle::new(session.handle.root(), session.handle.profile().clone());
    std::mem::replace(&mut session.handle, placeholder)
}

fn tool_context(warning: &Warning, session: &mut Session<'_>) -> ToolContext {
    let mut ctx = ToolContext::new(
        take_handle(session),
        warning.clone(),
        session.docs_dir.clone(),
        session.approver.clone(),
    );
    ctx.hit_cap = session.config.hit_cap;
    ctx
}

pub fn classify_warning(warning: &Warning, session: &mut Session<'_>) -> ClassificationRun {
    let started = Instant::now();
    let settings = session.config.settings(AgentMode::Classify);
    let mut ctx = tool_context(warning, session);
    let mut state = AgentState::new(AgentMode::Classify, settings.budget);
    let records = {
        let mut env = AgentEnv {
            model: session.model,
            tools: &mut ctx,
            warning,
            settings: &settings,
        };
        run_agent(&mut state, &mut env)
    };
    session.handle = ctx.handle;
    let (classification, budget_exhausted, error) = match state.outcome {
        Some(AgentOutcome::Verdict { classification }) => (classification, false, None),
        Some(AgentOutcome::Infrastructure { message }) => (
            default_classification(&format!("classification aborted: {message}"), &ctx.answers),
            false,
            Some(message),
        ),
        _ => (default_classification(EXHAUSTED_RATIONALE, &ctx.answers), true, None),
    };
    ClassificationRun {
        classification,
        budget_exhausted,
        cycles: state.cycle,
        usage: usage_of(&records),
        records,
        error,
        wall_time: started.elapsed(),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("suppression guidance only applies to false positives")]
pub struct NotAFalsePositive;

/// Prompt fragment for the suppressing agent.
pub fn suppression_guidance(
    classification: &Classification,
    syntax: &SuppressionSyntax,
    warning: &Warning,
) -> Result<String, NotAFalsePositive> {
    if classification.verdict != Verdict::FalsePositive {
        return Err(NotAFalsePositive);
    }
    let rationale = if classification.rationale.trim().is_empty() {
        "(The classifier gave no rationale.)".to_string()
    } else {
        classification.rationale.clone()
    };
    Ok(format!(
        "The classification agent judged this warning a false positive, with this rationale:\n{rationale}\n\n\
Suppress the warning instead of changing what the code does. Prefer appending the inline marker `{marker}` \
to line {line} of {file}, keeping the rest of the line as it is. Use `{annotation}({{\"{rule}\"}})` only if \
the inline marker cannot work, and then on the smallest construct that contains line {line}.",
        marker = syntax.inline_marker,
        annotation = syntax.scope_annotation,
        rule = warning.rule_key,
        line = warning.start_line,
        file = warning.file_path,
    ))
}

/// Runs the repair agent in fix mode for a true positive and in suppress mode
/// for a false positive. An approved fix stays applied to the workspace;
/// anything else leaves the workspace pristine.
pub fn repair_warning(warning: &Warning, classified: &ClassificationRun, session: &mut Session<'_>) -> WarningRun {
    let started = Instant::now();
    let classification = &classified.classification;
    let mode = match classification.verdict {
        Verdict::TruePositive => AgentMode::RepairFix,
        Verdict::FalsePositive => AgentMode::RepairSuppress,
    };
    let settings = session.config.settings(mode);
    let mut state = AgentState::new(mode, settings.budget);
    if mode == AgentMode::RepairSuppress {
        state.classifier_verdict = suppression_guidance(classification, &session.approver.analyzer.suppression, warning).ok();
    }
    let mut ctx = tool_context(warning, session);
    let repair_records = {
        let mut env = AgentEnv {
            model: session.model,
            tools: &mut ctx,
            warning,
            settings: &settings,
        };
        run_agent(&mut state, &mut env)
    };
    let (approved, status) = match &state.outcome {
        Some(AgentOutcome::Accomplished) if ctx.approved_fix.is_some() => (true, RunStatus::Approved),
        Some(AgentOutcome::Infrastructure { message }) => (false, RunStatus::Error(message.clone())),
        _ => (false, RunStatus::NotApproved),
    };
    let mut status = status;
    if !approved {
        if let Err(e) = ctx.handle.rollback() {
            status = RunStatus::Error(format!("workspace rollback failed: {e}"));
        }
    }
    let final_fix = if approved { ctx.approved_fix.clone() } else { ctx.last_fix.clone() };
    let mut records = classified.records.clone();
    records.extend(repair_records);
    let usage = usage_of(&records);
    let outcome = RunOutcome {
        warning: warning.clone(),
        classification: classification.clone(),
        classification_budget_exhausted: classified.budget_exhausted,
        final_fix,
        approved,
        status,
        cycles_used: CycleCounts {
            classification: classified.cycles,
            repair: state.cycle,
        },
        write_fix_calls: ctx.write_fix_calls,
        last_feedback: if approved { None } else { ctx.last_feedback.clone() },
        token_usage: usage,
        cost_usd: cost(&usage, &session.config.pricing),
        wall_time: classified.wall_time + started.elapsed(),
    };
    session.handle = ctx.handle;
    WarningRun { outcome, records }
}

/// Classifies and then repairs one warning.
pub fn process_warning(warning: &Warning, session: &mut Session<'_>) -> WarningRun {
    let classified = classify_warning(warning, session);
    if let Some(message) = &classified.error {
        let usage = classified.usage;
        return WarningRun {
            outcome: RunOutcome {
                warning: warning.clone(),
                classification: classified.classification.clone(),
                classification_budget_exhausted: false,
                final_fix: None,
                approved: false,
                status: RunStatus::Error(message.clone()),
                cycles_used: CycleCounts {
                    classification: classified.cycles,
                    repair: 0,
                },
                write_fix_calls: 0,
                last_feedback: None,
                token_usage: usage,
                cost_usd: cost(&usage, &session.config.pricing),
                wall_time: classified.wall_time,
            },
            records: classified.records,
        };
    }
    repair_warning(warning, &classified, session)
}

/// Applies `fix` to a pristine workspace, runs `approver` on it and rolls
/// back. Used to check fixes approved under a reduced check set against the
/// full one.
pub fn revalidate_fix(
    handle: &mut ProjectHandle,
    fix: &FixSpec,
    warning: &Warning,
    approver: &Approver,
) -> Result<ApprovalVerdict, EditError> {
    handle.rollback()?;
    let maps = match apply_fix(handle, fix) {
        Ok(maps) => maps,
        Err(e) => {
            let _ = handle.rollback();
            return Err(e);
        }
    };
    let verdict = approver.approve(handle, warning, &maps);
    handle.rollback()?;
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RuleType;

    fn classification(verdict: Verdict, rationale: &str) -> Classification {
        default_classification(rationale, &[None, None, None]).with_verdict(verdict)
    }

    impl Classification {
        fn with_verdict(mut self, verdict: Verdict) -> Classification {
            self.verdict = verdict;
            self
        }
    }

    fn warning() -> Warning {
        Warning {
            repository: "r".into(),
            rule_key: "java:S1068".into(),
            file_path: "src/W.java".into(),
            start_line: 9,
            rule_name: String::new(),
            specific_message: String::new(),
            rule_type: RuleType::CodeSmell,
        }
    }

    #[test]
    fn guidance_embeds_rationale_and_prefers_marker() {
        let c = classification(Verdict::FalsePositive, "Lombok generates the getter that reads this field.");
        let text = suppression_guidance(&c, &SuppressionSyntax::default(), &warning()).unwrap();
        assert!(text.contains("Lombok generates the getter that reads this field."));
        assert!(text.contains("Prefer appending the inline marker `//NOSONAR` to line 9"));
        assert!(text.contains("@SuppressWarnings({\"java:S1068\"})"));
    }

    #[test]
    fn guidance_rejects_true_positives_and_notes_missing_rationale() {
        let tp = classification(Verdict::TruePositive, "x");
        assert_eq!(
            suppression_guidance(&tp, &SuppressionSyntax::default(), &warning()),
            Err(NotAFalsePositive)
        );
        let empty = classification(Verdict::FalsePositive, "  ");
        let text = suppression_guidance(&empty, &SuppressionSyntax::default(), &warning()).unwrap();
        assert!(text.contains("no rationale"));
    }

    #[test]
    fn default_classification_keeps_recorded_answers() {
        let q2 = QuestionAnswer {
            answer: Answer::Yes,
            explanation: "looks deliberate".into(),
        };
        let c = default_classification(EXHAUSTED_RATIONALE, &[None, Some(q2.clone()), None]);
        assert_eq!(c.verdict, Verdict::TruePositive);
        assert_eq!(c.rationale, "budget exhausted");
        assert_eq!(c.question_answers[1], q2);
        assert_eq!(c.question_answers[0].answer, Answer::Yes);
    }

    #[test]
    fn budgets_default_to_twenty_and_forty() {
        let config = RunConfig::default();
        assert_eq!(config.settings(AgentMode::Classify).budget, 20);
        assert_eq!(config.settings(AgentMode::RepairFix).budget, 40);
        assert_eq!(config.settings(AgentMode::RepairSuppress).budget, 40);
    }
}
