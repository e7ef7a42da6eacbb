//! The cycle loop shared by the classification and repair agents.
//!
//! One cycle builds the prompt from the [`AgentState`], asks the model for a
//! response, parses it into a [`ToolCall`], executes the call and appends
//! exactly one [`HistoryEntry`].

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::approver::ApprovalVerdict;
use crate::gateway::{complete_with_retry, prompt_hash, LanguageModel, RetryPolicy, TokenUsage};
use crate::model::{Classification, Warning};
use crate::tools::{ToolName, ToolRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    Classify,
    RepairFix,
    RepairSuppress,
}

impl AgentMode {
    pub const ALL: [AgentMode; 3] = [AgentMode::Classify, AgentMode::RepairFix, AgentMode::RepairSuppress];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentMode::Classify => "classify",
            AgentMode::RepairFix => "repair_fix",
            AgentMode::RepairSuppress => "repair_suppress",
        }
    }

    pub fn is_repair(self) -> bool {
        self != AgentMode::Classify
    }
}

impl fmt::Display for AgentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const TRUNCATION_MARKER: &str = "\n[... output truncated: token limit reached ...]";

/// Cuts `text` to at most `cap` estimated tokens and appends
/// [`TRUNCATION_MARKER`] when anything was cut.
pub fn truncate_output(text: &str, cap: usize, chars_per_token: usize) -> String {
    assert!(cap > 0, "token cap must be positive");
    let limit = cap.saturating_mul(chars_per_token.max(1));
    match text.char_indices().nth(limit) {
        None => text.to_string(),
        Some((byte, _)) => format!("{}{TRUNCATION_MARKER}", &text[..byte]),
    }
}

/// Fixed prompt wording. Every field can be overridden from configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTexts {
    pub classify_role: String,
    pub repair_fix_role: String,
    pub repair_suppress_role: String,
    pub constraints: Vec<String>,
    pub classification_questions: [String; 3],
    /// Extra constraint added near the end of a repair budget. `{remaining}`
    /// is replaced by the number of cycles left, the current one included.
    pub urging_message: String,
    pub response_format: String,
}

impl Default for PromptTexts {
    fn default() -> Self {
        PromptTexts {
            classify_role: "You are a senior software engineer triaging a warning reported by a static analyzer. \
Decide whether the warning is a true positive (the code should be changed) or a false positive \
(the warning should be suppressed). Use the tools to inspect the rule and the code, record your answers \
to the three classification questions, and finish with give_final_verdict."
                .into(),
            repair_fix_role: "You are a senior software engineer. The warning below was classified as a true positive. \
Change the code so that the warning disappears. Your change must keep the project building, must not \
introduce new static-analysis warnings and must keep the tests passing. Record a plan with formulate_plan, \
propose your change with write_fix and call goals_accomplished once a fix has been approved."
                .into(),
            repair_suppress_role: "You are a senior software engineer. The warning below was classified as a false positive. \
Suppress it with write_fix, changing as little code as possible, and call goals_accomplished once the \
suppression has been approved."
                .into(),
            constraints: vec![
                "You cannot ask the user for help. Work only with the tools listed below.".into(),
                "Do not introduce new static-analysis warnings.".into(),
            ],
            classification_questions: [
                "Q1: Is the warning raised correctly, that is, does the rule's description actually apply to this code?".into(),
                "Q2: Could the developer have broken the rule on purpose, for example for functional or design reasons?".into(),
                "Q3: Can the warning be fixed without breaking existing functionality?".into(),
            ],
            urging_message: "Only {remaining} cycle(s) remain. Submit a complete fix with write_fix now.".into(),
            response_format: "Reply with exactly one JSON object and nothing else:\n\
{\"thoughts\": \"<your reasoning>\", \"tool\": {\"name\": \"<tool name>\", \"args\": {<argument name>: <value>, ...}}}\n\
Call exactly one tool per response. Tool names and argument names are listed in the available tools section."
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSettings {
    pub budget: u32,
    /// Repair prompts carry the urging message once this many cycles or
    /// fewer remain.
    pub urge_threshold: u32,
    pub token_cap: usize,
    pub chars_per_token: usize,
    pub retry: RetryPolicy,
    pub texts: PromptTexts,
}

pub const CLASSIFICATION_BUDGET: u32 = 20;
pub const REPAIR_BUDGET: u32 = 40;

impl Default for AgentSettings {
    fn default() -> Self {
        AgentSettings {
            budget: REPAIR_BUDGET,
            urge_threshold: 5,
            token_cap: 125_000,
            chars_per_token: 4,
            retry: RetryPolicy::default(),
            texts: PromptTexts::default(),
        }
    }
}

impl AgentSettings {
    pub fn with_budget(budget: u32) -> AgentSettings {
        AgentSettings {
            budget,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: ToolName,
    pub arguments: Map<String, Value>,
    pub thoughts: String,
}

impl ToolCall {
    pub fn new(name: ToolName, arguments: Value, thoughts: impl Into<String>) -> ToolCall {
        let arguments = match arguments {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => panic!("tool arguments must be an object, got {other}"),
        };
        ToolCall {
            name,
            arguments,
            thoughts: thoughts.into(),
        }
    }

    /// Renders the call in the response wire format.
    pub fn to_response(&self) -> String {
        serde_json::json!({
            "thoughts": self.thoughts,
            "tool": {"name": self.name.as_str(), "args": self.arguments},
        })
        .to_string()
    }

    pub fn render(&self) -> String {
        format!("{}({})", self.name.as_str(), Value::Object(self.arguments.clone()))
    }

    pub fn str_arg(&self, name: &str) -> Option<&str> {
        self.arguments.get(name).and_then(Value::as_str)
    }

    pub fn int_arg(&self, name: &str) -> Option<i64> {
        self.arguments.get(name).and_then(Value::as_i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseFailure {
    Malformed { line: usize, column: usize, message: String },
    UnknownTool { name: String },
    Unavailable { tool: String, mode: AgentMode },
    InvalidArguments { tool: String, message: String },
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailure::Malformed { line, column, message } => {
                write!(f, "Your response is not valid: {message} (line {line}, column {column}).")
            }
            ParseFailure::UnknownTool { name } => write!(f, "There is no tool named `{name}`."),
            ParseFailure::Unavailable { tool, mode } => {
                write!(f, "The tool `{tool}` is unavailable in this mode ({mode}).")
            }
            ParseFailure::InvalidArguments { tool, message } => {
                write!(f, "Invalid arguments for `{tool}`: {message}")
            }
        }
    }
}

fn strip_code_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        if let (Some(nl), Some(body)) = (rest.find('\n'), rest.strip_suffix("```")) {
            if nl < body.len() {
                return body[nl + 1..].trim();
            }
        }
    }
    trimmed
}

fn malformed(message: impl Into<String>) -> ParseFailure {
    ParseFailure::Malformed {
        line: 1,
        column: 1,
        message: message.into(),
    }
}

/// Parses a model response into a call that the registry accepts.
pub fn parse_response(raw: &str, registry: &ToolRegistry) -> Result<ToolCall, ParseFailure> {
    let body = strip_code_fence(raw);
    let value: Value = serde_json::from_str(body).map_err(|e| ParseFailure::Malformed {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| malformed("expected a JSON object"))?;
    let thoughts = match obj.get("thoughts") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("`thoughts` must be a string")),
    };
    let tool = obj
        .get("tool")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("missing object field `tool`"))?;
    let name = tool
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing string field `tool.name`"))?;
    let arguments = match tool.get("args") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(malformed("`tool.args` must be an object")),
    };
    let tool_name = ToolName::parse(name).ok_or_else(|| ParseFailure::UnknownTool { name: name.to_string() })?;
    if !registry.contains(tool_name) {
        return Err(ParseFailure::Unavailable {
            tool: tool_name.as_str().to_string(),
            mode: registry.mode(),
        });
    }
    let call = ToolCall {
        name: tool_name,
        arguments,
        thoughts,
    };
    tool_name.validate(&call).map_err(|message| ParseFailure::InvalidArguments {
        tool: tool_name.as_str().to_string(),
        message,
    })?;
    Ok(call)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub cycle: u32,
    pub thoughts: String,
    pub tool_call: Option<ToolCall>,
    pub tool_output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentOutcome {
    Verdict { classification: Classification },
    Accomplished,
    BudgetExhausted,
    Infrastructure { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub mode: AgentMode,
    pub cycle: u32,
    pub budget: u32,
    pub history: Vec<HistoryEntry>,
    pub done: bool,
    pub outcome: Option<AgentOutcome>,
    pub plan: Option<String>,
    /// Classifier rationale shown to the suppressing agent.
    pub classifier_verdict: Option<String>,
}

impl AgentState {
    pub fn new(mode: AgentMode, budget: u32) -> AgentState {
        AgentState {
            mode,
            cycle: 0,
            budget,
            history: Vec::new(),
            done: false,
            outcome: None,
            plan: None,
            classifier_verdict: None,
        }
    }

    /// Cycles left counting the next one.
    pub fn remaining(&self) -> u32 {
        self.budget.saturating_sub(self.cycle)
    }
}

pub fn render_warning(w: &Warning) -> String {
    format!(
        "Repository: {}\nRule key: {}\nFile path: {}\nStart line: {}\nRule name: {}\nSpecific message: {}\nRule type: {}\n",
        w.repository,
        w.rule_key,
        w.file_path,
        w.start_line,
        w.rule_name,
        w.specific_message,
        w.rule_type.label()
    )
}

fn section(out: &mut String, title: &str, body: &str) {
    let _ = write!(out, "## {title}\n\n{}\n\n", body.trim_end());
}

/// Whether the next prompt for `state` carries the urging message.
pub fn urging_active(state: &AgentState, settings: &AgentSettings) -> bool {
    state.mode.is_repair() && state.remaining() <= settings.urge_threshold
}

/// Renders the prompt for the next cycle of `state`.
pub fn build_prompt(state: &AgentState, warning: &Warning, settings: &AgentSettings) -> String {
    let texts = &settings.texts;
    let mut out = String::new();
    let role = match state.mode {
        AgentMode::Classify => &texts.classify_role,
        AgentMode::RepairFix => &texts.repair_fix_role,
        AgentMode::RepairSuppress => &texts.repair_suppress_role,
    };
    section(&mut out, "Role and objectives", role);

    let mut constraints: Vec<String> = texts.constraints.iter().map(|c| format!("- {c}")).collect();
    if urging_active(state, settings) {
        let message = texts.urging_message.replace("{remaining}", &state.remaining().to_string());
        constraints.push(format!("- {message}"));
    }
    section(&mut out, "Constraints", &constraints.join("\n"));

    section(&mut out, "Available tools", &ToolRegistry::for_mode(state.mode).render());

    let mut input = render_warning(warning);
    if state.mode == AgentMode::Classify {
        input.push_str("\nClassification questions:\n");
        for q in &texts.classification_questions {
            let _ = writeln!(input, "{q}");
        }
    }
    section(&mut out, "Input warning", &input);

    if let Some(plan) = &state.plan {
        section(&mut out, "Current plan", plan);
    }
    if let Some(verdict) = &state.classifier_verdict {
        section(&mut out, "Classifier verdict", verdict);
    }

    let history = if state.history.is_empty() {
        "No previous cycles.".to_string()
    } else {
        let mut h = String::new();
        for entry in &state.history {
            let _ = writeln!(h, "### Cycle {}", entry.cycle);
            if !entry.thoughts.is_empty() {
                let _ = writeln!(h, "Thoughts: {}", entry.thoughts);
            }
            match &entry.tool_call {
                Some(call) => {
                    let _ = writeln!(h, "Tool call: {}", call.render());
                }
                None => h.push_str("Tool call: none (response rejected)\n"),
            }
            let _ = writeln!(h, "Tool output:\n{}\n", entry.tool_output);
        }
        h
    };
    section(&mut out, "Agent history", &history);
    section(&mut out, "Response format", &texts.response_format);
    out
}

/// What a tool execution hands back to the loop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToolResult {
    pub output: String,
    /// Ends the run when set.
    pub outcome: Option<AgentOutcome>,
    /// Replaces the plan section.
    pub plan: Option<String>,
    pub approval: Option<ApprovalVerdict>,
}

impl ToolResult {
    pub fn text(output: impl Into<String>) -> ToolResult {
        ToolResult {
            output: output.into(),
            ..Default::default()
        }
    }
}

pub trait ToolExecutor {
    fn execute(&mut self, mode: AgentMode, call: &ToolCall) -> ToolResult;
}

/// Everything a cycle needs besides the state.
pub struct AgentEnv<'a> {
    pub model: &'a dyn LanguageModel,
    pub tools: &'a mut dyn ToolExecutor,
    pub warning: &'a Warning,
    pub settings: &'a AgentSettings,
}

/// Full record of one cycle, as persisted in trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub mode: AgentMode,
    pub cycle: u32,
    pub prompt: String,
    pub prompt_hash: String,
    pub response: String,
    pub usage: TokenUsage,
    pub tool_call: Option<ToolCall>,
    pub tool_output: String,
    pub parse_error: Option<ParseFailure>,
    pub approval: Option<ApprovalVerdict>,
}

/// Runs one cycle. Returns `None` when the model could not be reached; the
/// state is then finished with an infrastructure outcome and no history
/// entry is added.
pub fn run_cycle(state: &mut AgentState, env: &mut AgentEnv<'_>) -> Option<CycleRecord> {
    assert!(!state.done, "run_cycle on a finished agent");
    assert!(state.cycle < state.budget, "run_cycle past the budget");
    let prompt = build_prompt(state, env.warning, env.settings);
    let completion = match complete_with_retry(env.model, &prompt, &env.settings.retry) {
        Ok(c) => c,
        Err(e) => {
            state.done = true;
            state.outcome = Some(AgentOutcome::Infrastructure {
                message: format!("model call failed: {e}"),
            });
            return None;
        }
    };
    state.cycle += 1;
    let registry = ToolRegistry::for_mode(state.mode);
    let mut record = CycleRecord {
        mode: state.mode,
        cycle: state.cycle,
        prompt_hash: prompt_hash(&prompt),
        prompt,
        response: completion.response.clone(),
        usage: completion.usage,
        tool_call: None,
        tool_output: String::new(),
        parse_error: None,
        approval: None,
    };
    let entry = match parse_response(&completion.response, &registry) {
        Err(failure) => {
            let output = truncate_output(&failure.to_string(), env.settings.token_cap, env.settings.chars_per_token);
            record.parse_error = Some(failure);
            HistoryEntry {
                cycle: state.cycle,
                thoughts: String::new(),
                tool_call: None,
                tool_output: output,
            }
        }
        Ok(call) => {
            let result = env.tools.execute(state.mode, &call);
            if let Some(plan) = result.plan {
                state.plan = Some(plan);
            }
            if let Some(outcome) = result.outcome {
                state.done = true;
                state.outcome = Some(outcome);
            }
            record.tool_call = Some(call.clone());
            record.approval = result.approval;
            HistoryEntry {
                cycle: state.cycle,
                thoughts: call.thoughts.clone(),
                tool_output: truncate_output(&result.output, env.settings.token_cap, env.settings.chars_per_token),
                tool_call: Some(call),
            }
        }
    };
    record.tool_output = entry.tool_output.clone();
    state.history.push(entry);
    if !state.done && state.cycle >= state.budget {
        state.done = true;
        state.outcome = Some(AgentOutcome::BudgetExhausted);
    }
    Some(record)
}

/// Runs cycles until the agent finishes, returning every cycle record.
pub fn run_agent(state: &mut AgentState, env: &mut AgentEnv<'_>) -> Vec<CycleRecord> {
    let mut records = Vec::new();
    while !state.done && state.cycle < state.budget {
        match run_cycle(state, env) {
            Some(r) => records.push(r),
            None => break,
        }
    }
    if !state.done {
        state.done = true;
        state.outcome = Some(AgentOutcome::BudgetExhausted);
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedGateway;
    use crate::model::RuleType;
    use serde_json::json;

    fn warning() -> Warning {
        Warning {
            repository: "repo@abc".into(),
            rule_key: "java:S1104".into(),
            file_path: "src/A.java".into(),
            start_line: 3,
            rule_name: "Class variable fields should not have public accessibility".into(),
            specific_message: "Make x a static final constant or non-public and provide accessors if needed.".into(),
            rule_type: RuleType::CodeSmell,
        }
    }

    struct Echo {
        calls: Vec<ToolName>,
    }

    impl ToolExecutor for Echo {
        fn execute(&mut self, _mode: AgentMode, call: &ToolCall) -> ToolResult {
            self.calls.push(call.name);
            match call.name {
                ToolName::FormulatePlan => ToolResult {
                    output: "Plan recorded.".into(),
                    plan: call.str_arg("plan").map(String::from),
                    ..Default::default()
                },
                ToolName::GoalsAccomplished => ToolResult {
                    output: "done".into(),
                    outcome: Some(AgentOutcome::Accomplished),
                    ..Default::default()
                },
                _ => ToolResult::text(format!("ran {}", call.name.as_str())),
            }
        }
    }

    #[test]
    fn truncation_boundaries() {
        assert_eq!(truncate_output("short", 10, 4), "short");
        let long = "a".repeat(600_000);
        let cut = truncate_output(&long, 125_000, 4);
        assert_eq!(cut.len(), 500_000 + TRUNCATION_MARKER.len());
        assert!(cut.starts_with(&"a".repeat(500_000)));
        assert!(cut.ends_with(TRUNCATION_MARKER));
        let tiny = truncate_output("abcdefgh", 1, 4);
        assert_eq!(tiny, format!("abcd{TRUNCATION_MARKER}"));
        let exact = "x".repeat(40);
        assert_eq!(truncate_output(&exact, 10, 4), exact);
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let text = "é".repeat(10);
        assert_eq!(truncate_output(&text, 1, 4), format!("éééé{TRUNCATION_MARKER}"));
    }

    #[test]
    fn classify_prompt_lists_only_classify_tools() {
        let state = AgentState::new(AgentMode::Classify, 20);
        let prompt = build_prompt(&state, &warning(), &AgentSettings::default());
        for tool in ToolName::ALL {
            let listed = prompt.contains(&format!("- {}(", tool.as_str()));
            assert_eq!(listed, tool.available_in(AgentMode::Classify), "{tool:?}");
        }
        let order = [
            "## Role and objectives",
            "## Constraints",
            "## Available tools",
            "## Input warning",
            "## Agent history",
            "## Response format",
        ];
        let positions: Vec<usize> = order.iter().map(|h| prompt.find(h).unwrap()).collect();
        assert!(positions.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn plan_section_and_determinism() {
        let mut state = AgentState::new(AgentMode::RepairFix, 40);
        let settings = AgentSettings::default();
        assert!(!build_prompt(&state, &warning(), &settings).contains("## Current plan"));
        state.plan = Some("1. make the field private".into());
        let a = build_prompt(&state, &warning(), &settings);
        let b = build_prompt(&state, &warning(), &settings);
        assert_eq!(a, b);
        let plan_at = a.find("## Current plan\n\n1. make the field private").unwrap();
        assert!(a.find("## Input warning").unwrap() < plan_at);
        assert!(plan_at < a.find("## Agent history").unwrap());
    }

    #[test]
    fn parse_well_formed_and_failures() {
        let reg = ToolRegistry::for_mode(AgentMode::Classify);
        let ok = parse_response(
            r#"{"thoughts":"check the rule","tool":{"name":"read_documentation","args":{"rule_key":"S1104"}}}"#,
            &reg,
        )
        .unwrap();
        assert_eq!(ok.name, ToolName::ReadDocumentation);
        assert_eq!(ok.str_arg("rule_key"), Some("S1104"));
        assert_eq!(ok.thoughts, "check the rule");

        let fenced = "```json\n{\"tool\":{\"name\":\"read_documentation\",\"args\":{\"rule_key\":\"S1\"}}}\n```";
        assert!(parse_response(fenced, &reg).is_ok());

        let unavailable = parse_response(r#"{"thoughts":"","tool":{"name":"write_fix","args":{"fix":[]}}}"#, &reg).unwrap_err();
        assert!(matches!(unavailable, ParseFailure::Unavailable { .. }));
        assert!(unavailable.to_string().contains("unavailable in this mode"));

        let unknown = parse_response(r#"{"thoughts":"","tool":{"name":"run_shell","args":{}}}"#, &reg).unwrap_err();
        assert_eq!(unknown, ParseFailure::UnknownTool { name: "run_shell".into() });

        match parse_response("{\"thoughts\": \"x\",\n \"tool\": {", &reg).unwrap_err() {
            ParseFailure::Malformed { line, column, .. } => assert_eq!((line, column), (2, 10)),
            other => panic!("{other:?}"),
        }

        let bad_args = parse_response(
            r#"{"tool":{"name":"read_lines","args":{"file_path":"A","start_line":9,"end_line":2}}}"#,
            &reg,
        )
        .unwrap_err();
        assert!(matches!(bad_args, ParseFailure::InvalidArguments { .. }));
    }

    #[test]
    fn parse_failure_becomes_history_and_budget_ends_run() {
        let model = ScriptedGateway::repeating("not json at all");
        let mut tools = Echo { calls: vec![] };
        let settings = AgentSettings::default();
        let w = warning();
        let mut env = AgentEnv {
            model: &model,
            tools: &mut tools,
            warning: &w,
            settings: &settings,
        };
        let mut state = AgentState::new(AgentMode::Classify, 3);
        let records = run_agent(&mut state, &mut env);
        assert_eq!(records.len(), 3);
        assert_eq!(state.history.len(), 3);
        assert!(state.done);
        assert_eq!(state.outcome, Some(AgentOutcome::BudgetExhausted));
        assert!(records.iter().all(|r| r.parse_error.is_some()));
        assert!(tools.calls.is_empty());
    }

    #[test]
    fn urging_message_appears_in_last_five_repair_cycles() {
        let call = ToolCall::new(
            ToolName::ReadLines,
            json!({"file_path":"src/A.java","start_line":1,"end_line":2}),
            "look",
        );
        let model = ScriptedGateway::repeating(call.to_response());
        let mut tools = Echo { calls: vec![] };
        let settings = AgentSettings::default();
        let w = warning();
        let mut env = AgentEnv {
            model: &model,
            tools: &mut tools,
            warning: &w,
            settings: &settings,
        };
        let mut state = AgentState::new(AgentMode::RepairFix, 40);
        let records = run_agent(&mut state, &mut env);
        assert_eq!(records.len(), 40);
        let urged: Vec<u32> = records
            .iter()
            .filter(|r| r.prompt.contains("Submit a complete fix with write_fix now"))
            .map(|r| r.cycle)
            .collect();
        assert_eq!(urged, (36..=40).collect::<Vec<_>>());
        assert!(records[35].prompt.contains("Only 5 cycle(s) remain"));
        assert!(records[39].prompt.contains("Only 1 cycle(s) remain"));
    }

    #[test]
    fn plan_updates_and_terminal_tool() {
        let responses = [
            ToolCall::new(ToolName::FormulatePlan, json!({"plan":"first"}), "").to_response(),
            ToolCall::new(ToolName::FormulatePlan, json!({"plan":"second"}), "").to_response(),
            ToolCall::new(ToolName::GoalsAccomplished, json!({}), "").to_response(),
        ];
        let model = ScriptedGateway::from_responses(responses);
        let mut tools = Echo { calls: vec![] };
        let settings = AgentSettings::default();
        let w = warning();
        let mut env = AgentEnv {
            model: &model,
            tools: &mut tools,
            warning: &w,
            settings: &settings,
        };
        let mut state = AgentState::new(AgentMode::RepairFix, 40);
        let records = run_agent(&mut state, &mut env);
        assert_eq!(records.len(), 3);
        assert_eq!(state.plan.as_deref(), Some("second"));
        assert_eq!(state.outcome, Some(AgentOutcome::Accomplished));
        assert!(records[1].prompt.contains("## Current plan\n\nfirst"));
        assert!(records[2].prompt.contains("## Current plan\n\nsecond"));
        assert!(records[2].prompt.contains("formulate_plan({\"plan\":\"first\"})"));
    }

    #[test]
    fn unreachable_model_is_an_infrastructure_outcome() {
        let model = ScriptedGateway::from_responses(Vec::<String>::new());
        let mut tools = Echo { calls: vec![] };
        let settings = AgentSettings::default();
        let w = warning();
        let mut env = AgentEnv {
            model: &model,
            tools: &mut tools,
            warning: &w,
            settings: &settings,
        };
        let mut state = AgentState::new(AgentMode::Classify, 20);
        let records = run_agent(&mut state, &mut env);
        assert!(records.is_empty());
        assert!(state.history.is_empty());
        assert!(matches!(state.outcome, Some(AgentOutcome::Infrastructure { .. })));
    }
}
