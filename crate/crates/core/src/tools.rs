//! The agent's tools and which agent mode may use which.

use std::fmt::Write as _;
use std::fs;
use std::path::{Component, Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analyzer::{lookup_rule, missing_documentation_marker};
use crate::approver::{ApprovalVerdict, Approver};
use crate::edit::{apply_fix, parse_fix, parse_fix_value, EditError, FixError, FixSpec};
use crate::model::{Answer, Classification, QuestionAnswer, Verdict, Warning};
use crate::runtime::{AgentMode, AgentOutcome, ToolCall, ToolExecutor, ToolResult};
use crate::workspace::{self, ProjectHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    ReadDocumentation,
    ReadLines,
    FindReferences,
    FindDefinition,
    SearchPatterns,
    WriteFix,
    FormulatePlan,
    AnswerClassificationQuestions,
    GiveFinalVerdict,
    GoalsAccomplished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    Text,
    Integer,
    /// Yes/no answer with explanation, as a string or an object.
    Answer,
    /// Fix payload, as JSON or as a string holding JSON.
    Fix,
}

#[derive(Debug, Clone, Copy)]
pub struct ArgSpec {
    pub name: &'static str,
    pub kind: ArgKind,
    pub required: bool,
    pub help: &'static str,
}

const fn arg(name: &'static str, kind: ArgKind, help: &'static str) -> ArgSpec {
    ArgSpec {
        name,
        kind,
        required: true,
        help,
    }
}

const fn optional(name: &'static str, kind: ArgKind, help: &'static str) -> ArgSpec {
    ArgSpec {
        name,
        kind,
        required: false,
        help,
    }
}

const RULE_ARGS: &[ArgSpec] = &[arg("rule_key", ArgKind::Text, "rule key, e.g. java:S1104")];
const READ_LINES_ARGS: &[ArgSpec] = &[
    arg("file_path", ArgKind::Text, "path relative to the project root"),
    arg("start_line", ArgKind::Integer, "first line, 1-based"),
    arg("end_line", ArgKind::Integer, "last line, inclusive"),
];
const SYMBOL_ARGS: &[ArgSpec] = &[arg("symbol", ArgKind::Text, "identifier")];
const PATTERN_ARGS: &[ArgSpec] = &[arg("pattern", ArgKind::Text, "regular expression")];
const FIX_ARGS: &[ArgSpec] = &[arg("fix", ArgKind::Fix, "fix in the JSON format above")];
const PLAN_ARGS: &[ArgSpec] = &[arg("plan", ArgKind::Text, "the plan")];
const ANSWER_ARGS: &[ArgSpec] = &[
    optional("answer_q1", ArgKind::Answer, "answer to Q1"),
    optional("answer_q2", ArgKind::Answer, "answer to Q2"),
    optional("answer_q3", ArgKind::Answer, "answer to Q3"),
];
const VERDICT_ARGS: &[ArgSpec] = &[
    arg("verdict", ArgKind::Text, "true_positive or false_positive"),
    arg("rationale", ArgKind::Text, "why"),
];

use AgentMode::{Classify, RepairFix, RepairSuppress};

impl ToolName {
    pub const ALL: [ToolName; 10] = [
        ToolName::ReadDocumentation,
        ToolName::ReadLines,
        ToolName::FindReferences,
        ToolName::FindDefinition,
        ToolName::SearchPatterns,
        ToolName::WriteFix,
        ToolName::FormulatePlan,
        ToolName::AnswerClassificationQuestions,
        ToolName::GiveFinalVerdict,
        ToolName::GoalsAccomplished,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::ReadDocumentation => "read_documentation",
            ToolName::ReadLines => "read_lines",
            ToolName::FindReferences => "find_references",
            ToolName::FindDefinition => "find_definition",
            ToolName::SearchPatterns => "search_patterns",
            ToolName::WriteFix => "write_fix",
            ToolName::FormulatePlan => "formulate_plan",
            ToolName::AnswerClassificationQuestions => "answer_classification_questions",
            ToolName::GiveFinalVerdict => "give_final_verdict",
            ToolName::GoalsAccomplished => "goals_accomplished",
        }
    }

    /// Accepts the snake_case name and its CamelCase spelling.
    pub fn parse(raw: &str) -> Option<ToolName> {
        let squash = |s: &str| s.chars().filter(|c| *c != '_').collect::<String>().to_ascii_lowercase();
        let wanted = squash(raw.trim());
        ToolName::ALL.into_iter().find(|t| squash(t.as_str()) == wanted)
    }

    pub fn modes(self) -> &'static [AgentMode] {
        match self {
            ToolName::ReadLines => &[Classify, RepairFix, RepairSuppress],
            ToolName::ReadDocumentation | ToolName::FindReferences | ToolName::FindDefinition | ToolName::SearchPatterns => {
                &[Classify, RepairFix]
            }
            ToolName::WriteFix | ToolName::GoalsAccomplished => &[RepairFix, RepairSuppress],
            ToolName::FormulatePlan => &[RepairFix],
            ToolName::AnswerClassificationQuestions | ToolName::GiveFinalVerdict => &[Classify],
        }
    }

    pub fn available_in(self, mode: AgentMode) -> bool {
        self.modes().contains(&mode)
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, ToolName::GiveFinalVerdict | ToolName::GoalsAccomplished)
    }

    pub fn description(self) -> &'static str {
        match self {
            ToolName::ReadDocumentation => "Returns the documentation of an analysis rule.",
            ToolName::ReadLines => "Returns a numbered range of lines from a project file.",
            ToolName::FindReferences => "Lists project-local uses of a symbol (call sites, field accesses), without its declaration.",
            ToolName::FindDefinition => "Lists the declarations of a project-local symbol such as a class, method or field.",
            ToolName::SearchPatterns => "Lists the source lines matching a regular expression.",
            ToolName::WriteFix => {
                "Applies a fix or suppression and validates it (build, static analysis, tests). The fix is a JSON list \
with one entry per file: {\"file_name\": path, \"insertions\": [{\"line_number\": N, \"new_lines\": [..]}], \
\"deletions\": [N, ..]}. Line numbers refer to the original file. Insertions go before original line N; \
to replace line N, delete N and insert at N. Each call starts again from the original code."
            }
            ToolName::FormulatePlan => "Records or replaces your plan for fixing the warning.",
            ToolName::AnswerClassificationQuestions => {
                "Records your answer to one or more of the questions Q1-Q3. Each answer starts with Yes or No, \
followed by an explanation grounded in what you have read."
            }
            ToolName::GiveFinalVerdict => {
                "Gives the final classification, true_positive or false_positive, with its rationale. \
Requires answers to all three questions."
            }
            ToolName::GoalsAccomplished => "Ends the task. Allowed only after your latest fix was approved.",
        }
    }

    pub fn args(self) -> &'static [ArgSpec] {
        match self {
            ToolName::ReadDocumentation => RULE_ARGS,
            ToolName::ReadLines => READ_LINES_ARGS,
            ToolName::FindReferences | ToolName::FindDefinition => SYMBOL_ARGS,
            ToolName::SearchPatterns => PATTERN_ARGS,
            ToolName::WriteFix => FIX_ARGS,
            ToolName::FormulatePlan => PLAN_ARGS,
            ToolName::AnswerClassificationQuestions => ANSWER_ARGS,
            ToolName::GiveFinalVerdict => VERDICT_ARGS,
            ToolName::GoalsAccomplished => &[],
        }
    }

    pub fn render(self) -> String {
        let params: Vec<String> = self
            .args()
            .iter()
            .map(|a| {
                let kind = match a.kind {
                    ArgKind::Text => "string",
                    ArgKind::Integer => "integer",
                    ArgKind::Answer => "string",
                    ArgKind::Fix => "json",
                };
                format!("{}{}: {kind}", a.name, if a.required { "" } else { "?" })
            })
            .collect();
        format!("- {}({}): {}", self.as_str(), params.join(", "), self.description())
    }

    /// Checks a call's arguments against the declared schema.
    pub fn validate(self, call: &ToolCall) -> Result<(), String> {
        let specs = self.args();
        for key in call.arguments.keys() {
            if !specs.iter().any(|s| s.name == normalize_arg(key)) {
                return Err(format!("unexpected argument `{key}`"));
            }
        }
        for spec in specs {
            let value = lookup_arg(call, spec.name);
            let Some(value) = value else {
                if spec.required {
                    return Err(format!("missing argument `{}`", spec.name));
                }
                continue;
            };
            match spec.kind {
                ArgKind::Text => {
                    let s = value.as_str().ok_or_else(|| format!("`{}` must be a string", spec.name))?;
                    if s.trim().is_empty() {
                        return Err(format!("`{}` must not be empty", spec.name));
                    }
                }
                ArgKind::Integer => {
                    let n = value.as_i64().ok_or_else(|| format!("`{}` must be an integer", spec.name))?;
                    if n < 1 {
                        return Err(format!("`{}` must be at least 1", spec.name));
                    }
                }
                ArgKind::Answer => {
                    parse_answer(value).map_err(|e| format!("`{}`: {e}", spec.name))?;
                }
                ArgKind::Fix => {
                    if !(value.is_array() || value.is_string()) {
                        return Err("`fix` must be a JSON list or a string holding one".into());
                    }
                }
            }
        }
        match self {
            ToolName::ReadLines => {
                let start = call.int_arg("start_line").unwrap_or(1);
                let end = call.int_arg("end_line").unwrap_or(1);
                if start > end {
                    return Err(format!("start_line {start} is after end_line {end}"));
                }
            }
            ToolName::AnswerClassificationQuestions => {
                if !specs.iter().any(|s| lookup_arg(call, s.name).is_some()) {
                    return Err("give at least one of answer_q1, answer_q2, answer_q3".into());
                }
            }
            ToolName::GiveFinalVerdict => {
                let raw = call.str_arg("verdict").unwrap_or_default();
                if Verdict::parse(raw).is_none() {
                    return Err(format!("verdict `{raw}` is neither true_positive nor false_positive"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// `answerQ1` and `answer_q1` name the same argument.
fn normalize_arg(key: &str) -> String {
    let mut out = String::new();
    for (i, c) in key.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 && !out.ends_with('_') {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

fn lookup_arg<'a>(call: &'a ToolCall, name: &str) -> Option<&'a Value> {
    call.arguments
        .iter()
        .find(|(k, _)| normalize_arg(k) == name)
        .map(|(_, v)| v)
        .filter(|v| !v.is_null())
}

/// Reads an answer given as `"Yes, because ..."` or as
/// `{"answer": "yes", "explanation": "..."}`.
pub fn parse_answer(value: &Value) -> Result<QuestionAnswer, String> {
    let (answer, explanation) = match value {
        Value::String(s) => {
            let t = s.trim_start();
            let lower = t.to_ascii_lowercase();
            let (answer, rest) = if lower.starts_with("yes") {
                (Answer::Yes, &t[3..])
            } else if lower.starts_with("no") {
                (Answer::No, &t[2..])
            } else {
                return Err("an answer must start with Yes or No".into());
            };
            if rest.starts_with(|c: char| c.is_alphanumeric()) {
                return Err("an answer must start with Yes or No".into());
            }
            let explanation = rest.trim_start_matches(|c: char| c.is_whitespace() || ",.:;-".contains(c));
            (answer, explanation.trim_end().to_string())
        }
        Value::Object(m) => {
            let answer = match m.get("answer") {
                Some(Value::Bool(true)) => Answer::Yes,
                Some(Value::Bool(false)) => Answer::No,
                Some(Value::String(s)) if s.trim().eq_ignore_ascii_case("yes") => Answer::Yes,
                Some(Value::String(s)) if s.trim().eq_ignore_ascii_case("no") => Answer::No,
                _ => return Err("`answer` must be yes or no".into()),
            };
            let explanation = m.get("explanation").and_then(Value::as_str).unwrap_or_default().trim().to_string();
            (answer, explanation)
        }
        _ => return Err("expected a string or an object".into()),
    };
    if explanation.is_empty() {
        return Err("the answer lacks an explanation".into());
    }
    Ok(QuestionAnswer { answer, explanation })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolRegistry {
    mode: AgentMode,
    tools: Vec<ToolName>,
}

impl ToolRegistry {
    pub fn for_mode(mode: AgentMode) -> ToolRegistry {
        ToolRegistry {
            mode,
            tools: ToolName::ALL.into_iter().filter(|t| t.available_in(mode)).collect(),
        }
    }

    pub fn mode(&self) -> AgentMode {
        self.mode
    }

    pub fn tools(&self) -> &[ToolName] {
        &self.tools
    }

    pub fn contains(&self, tool: ToolName) -> bool {
        self.tools.contains(&tool)
    }

    pub fn render(&self) -> String {
        self.tools.iter().map(|t| t.render()).collect::<Vec<_>>().join("\n")
    }
}

pub const DEFAULT_HIT_CAP: usize = 200;
const EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub file_path: String,
    pub line: u32,
    pub excerpt: String,
}

fn excerpt(line: &str) -> String {
    let t = line.trim();
    match t.char_indices().nth(EXCERPT_CHARS) {
        Some((i, _)) => format!("{}...", &t[..i]),
        None => t.to_string(),
    }
}

const NOT_DECLARATION_TYPES: &[&str] = &[
    "return", "new", "throw", "else", "case", "yield", "await", "goto", "package", "import",
];

/// Whether `line` looks like it declares `symbol`.
pub fn declares(line: &str, symbol: &str) -> bool {
    let sym = regex::escape(symbol);
    let keyword = Regex::new(&format!(
        r"\b(?:class|interface|enum|record|struct|trait|fn|def|func|function|type)\s+{sym}\b"
    ))
    .expect("escaped symbol");
    if keyword.is_match(line) {
        return true;
    }
    let typed = Regex::new(&format!(
        r"^\s*(?:@\w+(?:\([^)]*\))?\s+)*(?:(?:public|protected|private|static|final|abstract|synchronized|native|default|transient|volatile)\s+)*(?:<[^>]*>\s+)?([\w$.]+(?:<[^;=()]*>)?(?:\[\])*)\s+{sym}\s*(?:\(|=|;|,)"
    ))
    .expect("escaped symbol");
    typed.captures(line).is_some_and(|c| !NOT_DECLARATION_TYPES.contains(&&c[1]))
}

/// Tool state for one agent run on one warning.
pub struct ToolContext {
    pub handle: ProjectHandle,
    pub warning: Warning,
    pub docs_dir: PathBuf,
    pub approver: Approver,
    pub hit_cap: usize,
    pub answers: [Option<QuestionAnswer>; 3],
    pub classification: Option<Classification>,
    pub write_fix_calls: u32,
    pub last_fix: Option<FixSpec>,
    pub last_approval: Option<ApprovalVerdict>,
    /// Fix currently applied to the workspace; always an approved one.
    pub approved_fix: Option<FixSpec>,
    pub last_feedback: Option<String>,
}

impl ToolContext {
    pub fn new(handle: ProjectHandle, warning: Warning, docs_dir: impl Into<PathBuf>, approver: Approver) -> ToolContext {
        ToolContext {
            handle,
            warning,
            docs_dir: docs_dir.into(),
            approver,
            hit_cap: DEFAULT_HIT_CAP,
            answers: [None, None, None],
            classification: None,
            write_fix_calls: 0,
            last_fix: None,
            last_approval: None,
            approved_fix: None,
            last_feedback: None,
        }
    }

    fn resolve(&self, file_path: &str) -> Result<PathBuf, String> {
        let p = Path::new(file_path);
        if p.is_absolute() || p.components().any(|c| matches!(c, Component::ParentDir)) {
            return Err(format!("Error: `{file_path}` must be a path relative to the project root."));
        }
        let full = self.handle.root().join(p);
        if !full.is_file() {
            return Err(format!("Error: file `{file_path}` does not exist."));
        }
        Ok(full)
    }

    fn source_lines(&self) -> Vec<(String, Vec<String>)> {
        workspace::source_files(self.handle.root(), &self.handle.profile().source_extensions)
            .into_iter()
            .filter_map(|rel| {
                let bytes = fs::read(self.handle.root().join(&rel)).ok()?;
                let text = String::from_utf8_lossy(&bytes);
                Some((rel, text.lines().map(String::from).collect()))
            })
            .collect()
    }

    pub fn read_documentation(&self, rule_key: &str) -> String {
        let rule = lookup_rule(rule_key, &self.docs_dir);
        if rule.documentation.trim().is_empty() {
            missing_documentation_marker(rule_key)
        } else {
            rule.documentation
        }
    }

    pub fn read_lines(&self, file_path: &str, start: u32, end: u32) -> String {
        let full = match self.resolve(file_path) {
            Ok(p) => p,
            Err(e) => return e,
        };
        let content = match fs::read(&full) {
            Ok(b) => String::from_utf8_lossy(&b).into_owned(),
            Err(e) => return format!("Error: cannot read `{file_path}`: {e}"),
        };
        let lines: Vec<&str> = content.lines().collect();
        let total = lines.len() as u32;
        if start > total {
            return format!("The file `{file_path}` has only {total} lines.");
        }
        let last = end.min(total);
        let mut out = String::new();
        for n in start..=last {
            let _ = writeln!(out, "{n}: {}", lines[n as usize - 1]);
        }
        if last < end {
            let _ = writeln!(out, "(end of file: `{file_path}` has {total} lines)");
        }
        out
    }

    fn scan(&self, mut keep: impl FnMut(&str) -> bool) -> Vec<Hit> {
        let mut hits = Vec::new();
        for (file, lines) in self.source_lines() {
            for (i, line) in lines.iter().enumerate() {
                if keep(line) {
                    hits.push(Hit {
                        file_path: file.clone(),
                        line: i as u32 + 1,
                        excerpt: excerpt(line),
                    });
                }
            }
        }
        hits
    }

    pub fn find_references(&self, symbol: &str) -> Vec<Hit> {
        let word = word_regex(symbol);
        self.scan(|line| word.is_match(line) && !declares(line, symbol))
    }

    pub fn find_definition(&self, symbol: &str) -> Vec<Hit> {
        let word = word_regex(symbol);
        self.scan(|line| word.is_match(line) && declares(line, symbol))
    }

    pub fn search_patterns(&self, pattern: &str) -> Result<Vec<Hit>, String> {
        let re = Regex::new(pattern).map_err(|e| format!("Error: invalid pattern: {e}"))?;
        Ok(self.scan(|line| re.is_match(line)))
    }

    fn render_hits(&self, what: &str, hits: &[Hit]) -> String {
        if hits.is_empty() {
            return format!("No {what} found.");
        }
        let mut out = format!("Found {} {what}:\n", hits.len());
        for h in hits.iter().take(self.hit_cap) {
            let _ = writeln!(out, "{}:{}: {}", h.file_path, h.line, h.excerpt);
        }
        if hits.len() > self.hit_cap {
            let _ = writeln!(out, "Only the first {} are shown; narrow your query.", self.hit_cap);
        }
        out
    }

    /// Parses, applies and validates a fix. Rejected fixes are rolled back.
    pub fn write_fix(&mut self, payload: &Value) -> ToolResult {
        self.write_fix_calls += 1;
        if let Err(e) = self.handle.rollback() {
            return infrastructure(format!("cannot restore the workspace: {e}"));
        }
        self.approved_fix = None;
        self.last_approval = None;
        let parsed = match payload {
            Value::String(s) => parse_fix(s),
            other => parse_fix_value(other),
        };
        let fix = match parsed {
            Ok(f) => f,
            Err(e) => return self.reject_payload(fix_error_text(&e)),
        };
        self.last_fix = Some(fix.clone());
        let maps = match apply_fix(&mut self.handle, &fix) {
            Ok(m) => m,
            Err(EditError::Fix(e)) => return self.reject_payload(fix_error_text(&e)),
            Err(e) => {
                let _ = self.handle.rollback();
                return infrastructure(format!("cannot apply the fix: {e}"));
            }
        };
        let verdict = self.approver.approve(&self.handle, &self.warning, &maps);
        if verdict.approved {
            self.approved_fix = Some(fix);
            self.last_feedback = None;
        } else {
            if let Err(e) = self.handle.rollback() {
                return infrastructure(format!("cannot restore the workspace: {e}"));
            }
            self.last_feedback = Some(verdict.feedback.clone());
        }
        self.last_approval = Some(verdict.clone());
        ToolResult {
            output: verdict.feedback.clone(),
            approval: Some(verdict),
            ..Default::default()
        }
    }

    fn reject_payload(&mut self, message: String) -> ToolResult {
        let output = format!("The fix could not be applied.\n{message}");
        self.last_feedback = Some(output.clone());
        ToolResult::text(output)
    }

    fn answer(&mut self, call: &ToolCall) -> ToolResult {
        let mut out = String::new();
        for (i, name) in ["answer_q1", "answer_q2", "answer_q3"].iter().enumerate() {
            if let Some(v) = lookup_arg(call, name) {
                match parse_answer(v) {
                    Ok(qa) => {
                        self.answers[i] = Some(qa);
                        let _ = writeln!(out, "Your answer to question Q{} has been recorded.", i + 1);
                    }
                    Err(e) => return ToolResult::text(format!("Error: {name}: {e}")),
                }
            }
        }
        ToolResult::text(out.trim_end().to_string())
    }

    fn final_verdict(&mut self, call: &ToolCall) -> ToolResult {
        let missing: Vec<String> = (0..3)
            .filter(|i| self.answers[*i].is_none())
            .map(|i| format!("Q{}", i + 1))
            .collect();
        if !missing.is_empty() {
            return ToolResult::text(format!(
                "Error: answer the three questions first (missing: {}).",
                missing.join(", ")
            ));
        }
        let verdict = Verdict::parse(call.str_arg("verdict").unwrap_or_default()).expect("validated");
        let [a, b, c] = self.answers.clone();
        let classification = Classification {
            verdict,
            rationale: call.str_arg("rationale").unwrap_or_default().trim().to_string(),
            question_answers: [a.expect("checked"), b.expect("checked"), c.expect("checked")],
        };
        self.classification = Some(classification.clone());
        ToolResult {
            output: format!("Final verdict recorded: {}.", verdict.label()),
            outcome: Some(AgentOutcome::Verdict { classification }),
            ..Default::default()
        }
    }

    fn goals_accomplished(&self) -> ToolResult {
        match &self.last_approval {
            Some(v) if v.approved => ToolResult {
                output: "Task completed.".into(),
                outcome: Some(AgentOutcome::Accomplished),
                ..Default::default()
            },
            Some(_) => ToolResult::text("Error: the checks have not passed for your latest fix."),
            None => ToolResult::text("Error: the checks have not passed; no fix has been approved yet."),
        }
    }
}

fn word_regex(symbol: &str) -> Regex {
    let esc = regex::escape(symbol.trim());
    // \b only works next to word characters
    let start = if symbol.trim().starts_with(|c: char| c.is_alphanumeric() || c == '_') {
        r"\b"
    } else {
        ""
    };
    let end = if symbol.trim().ends_with(|c: char| c.is_alphanumeric() || c == '_') {
        r"\b"
    } else {
        ""
    };
    Regex::new(&format!("{start}{esc}{end}")).expect("escaped symbol")
}

fn fix_error_text(e: &FixError) -> String {
    match e {
        FixError::Syntax { .. } => format!("{e}"),
        FixError::Invalid(violations) => {
            let mut out = format!("The fix has {} problem(s):\n", violations.len());
            for v in violations {
                let _ = writeln!(out, "- {v}");
            }
            out
        }
    }
}

fn infrastructure(message: String) -> ToolResult {
    ToolResult {
        output: format!("Error: {message}"),
        outcome: Some(AgentOutcome::Infrastructure { message }),
        ..Default::default()
    }
}

impl ToolExecutor for ToolContext {
    fn execute(&mut self, mode: AgentMode, call: &ToolCall) -> ToolResult {
        let tool = call.name;
        if !tool.available_in(mode) {
            return ToolResult::text(format!("Error: the tool `{}` is unavailable in this mode ({mode}).", tool.as_str()));
        }
        if let Err(e) = tool.validate(call) {
            return ToolResult::text(format!("Error: invalid arguments for `{}`: {e}", tool.as_str()));
        }
        let text = |k: &str| lookup_arg(call, k).and_then(Value::as_str).unwrap_or_default().trim().to_string();
        match tool {
            ToolName::ReadDocumentation => ToolResult::text(self.read_documentation(&text("rule_key"))),
            ToolName::ReadLines => {
                let start = call.int_arg("start_line").unwrap_or(1) as u32;
                let end = call.int_arg("end_line").unwrap_or(1) as u32;
                ToolResult::text(self.read_lines(&text("file_path"), start, end))
            }
            ToolName::FindReferences => {
                let sym = text("symbol");
                let hits = self.find_references(&sym);
                ToolResult::text(self.render_hits(&format!("reference(s) to `{sym}`"), &hits))
            }
            ToolName::FindDefinition => {
                let sym = text("symbol");
                let hits = self.find_definition(&sym);
                ToolResult::text(self.render_hits(&format!("definition(s) of `{sym}`"), &hits))
            }
            ToolName::SearchPatterns => {
                let pattern = lookup_arg(call, "pattern").and_then(Value::as_str).unwrap_or_default().to_string();
                match self.search_patterns(&pattern) {
                    Ok(hits) => ToolResult::text(self.render_hits(&format!("match(es) for `{pattern}`"), &hits)),
                    Err(e) => ToolResult::text(e),
                }
            }
            ToolName::WriteFix => {
                let payload = lookup_arg(call, "fix").cloned().unwrap_or(Value::Null);
                self.write_fix(&payload)
            }
            ToolName::FormulatePlan => {
                let plan = text("plan");
                ToolResult {
                    output: "Your plan has been recorded.".into(),
                    plan: Some(plan),
                    ..Default::default()
                }
            }
            ToolName::AnswerClassificationQuestions => self.answer(call),
            ToolName::GiveFinalVerdict => self.final_verdict(call),
            ToolName::GoalsAccomplished => self.goals_accomplished(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{self, AnalyzerConfig};
    use crate::approver::ApproverConfig;
    use crate::model::RuleType;
    use crate::workspace::ProjectProfile;
    use serde_json::json;

    fn context(files: &[(&str, &str)]) -> (tempfile::TempDir, ToolContext) {
        let dir = tempfile::tempdir().unwrap();
        for (name, content) in files {
            let p = dir.path().join(name);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, content).unwrap();
        }
        fs::create_dir_all(dir.path().join(".rules")).unwrap();
        fs::write(
            dir.path().join(".rules/java_S1104.md"),
            "Class variable fields should not have public accessibility\n\nMore text.\n",
        )
        .unwrap();
        let profile = ProjectProfile {
            build_command: "true".into(),
            test_command: "true".into(),
            ..Default::default()
        };
        let analyzer = AnalyzerConfig {
            enabled_rules: Some(["java:S1104".to_string()].into()),
            ..Default::default()
        };
        let baseline = analyzer::analyze(dir.path(), &analyzer).unwrap();
        let warning = baseline.warnings.first().cloned().unwrap_or(Warning {
            repository: "r".into(),
            rule_key: "java:S1104".into(),
            file_path: "A.java".into(),
            start_line: 1,
            rule_name: String::new(),
            specific_message: String::new(),
            rule_type: RuleType::CodeSmell,
        });
        let handle = ProjectHandle::new(dir.path(), profile);
        let approver = Approver::new(analyzer, baseline, ApproverConfig::default());
        let docs = dir.path().join(".rules");
        (dir, ToolContext::new(handle, warning, docs, approver))
    }

    fn call(tool: ToolName, args: Value) -> ToolCall {
        ToolCall::new(tool, args, "")
    }

    #[test]
    fn availability_matrix() {
        let expected = [
            ("read_documentation", [true, true, false]),
            ("read_lines", [true, true, true]),
            ("find_references", [true, true, false]),
            ("find_definition", [true, true, false]),
            ("search_patterns", [true, true, false]),
            ("write_fix", [false, true, true]),
            ("formulate_plan", [false, true, false]),
            ("answer_classification_questions", [true, false, false]),
            ("give_final_verdict", [true, false, false]),
            ("goals_accomplished", [false, true, true]),
        ];
        for (name, row) in expected {
            let tool = ToolName::parse(name).unwrap();
            for (mode, want) in AgentMode::ALL.into_iter().zip(row) {
                assert_eq!(tool.available_in(mode), want, "{name} in {mode}");
            }
        }
        assert_eq!(
            ToolRegistry::for_mode(AgentMode::RepairSuppress).tools(),
            &[ToolName::ReadLines, ToolName::WriteFix, ToolName::GoalsAccomplished]
        );
        assert_eq!(ToolName::parse("ReadDocumentation"), Some(ToolName::ReadDocumentation));
    }

    #[test]
    fn documentation_and_marker() {
        let (_d, mut ctx) = context(&[]);
        let out = ctx.execute(AgentMode::Classify, &call(ToolName::ReadDocumentation, json!({"rule_key":"S1104"})));
        assert!(out.output.starts_with("Class variable fields should not have public accessibility"));
        let missing = ctx.execute(
            AgentMode::Classify,
            &call(ToolName::ReadDocumentation, json!({"rule_key":"java:S42"})),
        );
        assert_eq!(missing.output, missing_documentation_marker("java:S42"));
        let empty = ctx.execute(AgentMode::Classify, &call(ToolName::ReadDocumentation, json!({"rule_key":""})));
        assert!(empty.output.contains("must not be empty"));
    }

    #[test]
    fn read_lines_clamps() {
        let content: String = (1..=10).map(|i| format!("line {i}\n")).collect();
        let (_d, ctx) = context(&[("A.java", &content)]);
        assert_eq!(ctx.read_lines("A.java", 2, 3), "2: line 2\n3: line 3\n");
        let clamped = ctx.read_lines("A.java", 9, 20);
        assert!(clamped.starts_with("9: line 9\n10: line 10\n"));
        assert!(clamped.contains("has 10 lines"));
        assert!(ctx.read_lines("Nope.java", 1, 2).contains("does not exist"));
        assert!(ctx.read_lines("../etc/passwd", 1, 2).contains("relative"));
        let bad = call(ToolName::ReadLines, json!({"file_path":"A.java","start_line":5,"end_line":4}));
        assert!(ToolName::ReadLines.validate(&bad).is_err());
    }

    #[test]
    fn references_definitions_and_search() {
        let (_d, ctx) = context(&[
            (
                "src/Info.java",
                "public class Info {\n    public int _number;\n    int other = _number + _number;\n}\n",
            ),
            (
                "src/Client.java",
                "class Client {\n    int id(Info info) { return id2(info._number); }\n    int id(String s) { return 0; }\n}\n",
            ),
        ]);
        let refs = ctx.find_references("_number");
        let locs: Vec<(&str, u32)> = refs.iter().map(|h| (h.file_path.as_str(), h.line)).collect();
        assert_eq!(locs, vec![("src/Client.java", 2), ("src/Info.java", 3)]);
        assert!(ctx.find_references("nothingLikeThis").is_empty());

        let defs = ctx.find_definition("Info");
        assert_eq!(defs.len(), 1);
        assert_eq!((defs[0].file_path.as_str(), defs[0].line), ("src/Info.java", 1));
        let overloads = ctx.find_definition("id");
        assert_eq!(overloads.iter().map(|h| h.line).collect::<Vec<_>>(), vec![2, 3]);
        assert!(ctx.find_definition("undefinedThing").is_empty());

        assert!(ctx.search_patterns("zzz+q").unwrap().is_empty());
        assert_eq!(ctx.search_patterns("return 0").unwrap().len(), 1);
        let err = ctx.search_patterns("(unclosed").unwrap_err();
        assert!(err.contains("invalid pattern"));
    }

    #[test]
    fn hit_cap_limits_output() {
        let content: String = (0..250).map(|i| format!("x{i} = hit;\n")).collect();
        let (_d, ctx) = context(&[("many.py", &content)]);
        let hits = ctx.search_patterns("hit").unwrap();
        assert_eq!(hits.len(), 250);
        let text = ctx.render_hits("match(es)", &hits);
        assert_eq!(text.lines().filter(|l| l.starts_with("many.py:")).count(), 200);
        assert!(text.contains("Only the first 200"));
    }

    #[test]
    fn answers_then_verdict() {
        let (_d, mut ctx) = context(&[]);
        let early = ctx.execute(
            AgentMode::Classify,
            &call(ToolName::GiveFinalVerdict, json!({"verdict":"true_positive","rationale":"x"})),
        );
        assert!(early.output.contains("answer the three questions first"));
        assert!(early.outcome.is_none());

        let q1 = ctx.execute(
            AgentMode::Classify,
            &call(
                ToolName::AnswerClassificationQuestions,
                json!({"answerQ1":"Yes, the rule violation is correctly raised."}),
            ),
        );
        assert_eq!(q1.output, "Your answer to question Q1 has been recorded.");
        let rest = ctx.execute(
            AgentMode::Classify,
            &call(
                ToolName::AnswerClassificationQuestions,
                json!({"answer_q2": {"answer":"no","explanation":"no sign of intent"}, "answer_q3":"Yes - accessors suffice"}),
            ),
        );
        assert_eq!(rest.output.lines().count(), 2);
        let bare = call(ToolName::AnswerClassificationQuestions, json!({"answer_q1":"Yes"}));
        assert!(ToolName::AnswerClassificationQuestions
            .validate(&bare)
            .unwrap_err()
            .contains("explanation"));

        let done = ctx.execute(
            AgentMode::Classify,
            &call(
                ToolName::GiveFinalVerdict,
                json!({"verdict":"false_positive","rationale":"generated code reads it"}),
            ),
        );
        match done.outcome {
            Some(AgentOutcome::Verdict { classification }) => {
                assert_eq!(classification.verdict, Verdict::FalsePositive);
                assert_eq!(classification.rationale, "generated code reads it");
                assert_eq!(classification.question_answers[1].answer, Answer::No);
                assert_eq!(classification.question_answers[2].explanation, "accessors suffice");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unavailable_tool_changes_nothing() {
        let (dir, mut ctx) = context(&[("A.java", "class A {\n    public int x;\n}\n")]);
        let before = workspace::tree_hash(dir.path());
        let fix = json!([{"file_name":"A.java","insertions":[],"deletions":[2]}]);
        let out = ctx.execute(AgentMode::Classify, &call(ToolName::WriteFix, json!({"fix": fix})));
        assert!(out.output.contains("unavailable in this mode"));
        assert_eq!(ctx.write_fix_calls, 0);
        assert_eq!(workspace::tree_hash(dir.path()), before);
    }

    #[test]
    fn write_fix_and_goals() {
        let (dir, mut ctx) = context(&[("A.java", "class A {\n    public int x;\n}\n")]);
        let pristine = workspace::tree_hash(dir.path());
        let early = ctx.execute(AgentMode::RepairFix, &call(ToolName::GoalsAccomplished, json!({})));
        assert!(early.output.contains("checks have not passed"));

        let broken = ctx.execute(AgentMode::RepairFix, &call(ToolName::WriteFix, json!({"fix": "[{\"file_name\": "})));
        assert!(broken.output.contains("could not be applied"));
        assert_eq!(workspace::tree_hash(dir.path()), pristine);

        let still_public =
            json!([{"file_name":"A.java","insertions":[{"line_number":2,"new_lines":["    public int x; // same"]}],"deletions":[2]}]);
        let rejected = ctx.execute(AgentMode::RepairFix, &call(ToolName::WriteFix, json!({"fix": still_public})));
        assert_eq!(rejected.approval.as_ref().map(|v| v.approved), Some(false));
        assert_eq!(workspace::tree_hash(dir.path()), pristine);
        let after_reject = ctx.execute(AgentMode::RepairFix, &call(ToolName::GoalsAccomplished, json!({})));
        assert!(after_reject.output.contains("checks have not passed"));

        let good = json!([{"file_name":"A.java","insertions":[{"line_number":2,"new_lines":["    private int x;"]}],"deletions":[2]}]);
        let approved = ctx.execute(AgentMode::RepairFix, &call(ToolName::WriteFix, json!({"fix": good.to_string()})));
        assert!(approved.approval.unwrap().approved, "{}", approved.output);
        assert_eq!(
            fs::read_to_string(dir.path().join("A.java")).unwrap(),
            "class A {\n    private int x;\n}\n"
        );
        let finish = ctx.execute(AgentMode::RepairFix, &call(ToolName::GoalsAccomplished, json!({})));
        assert_eq!(finish.outcome, Some(AgentOutcome::Accomplished));
        assert_eq!(ctx.write_fix_calls, 3);
    }

    #[test]
    fn plan_requires_text() {
        let (_d, mut ctx) = context(&[]);
        let ok = ctx.execute(AgentMode::RepairFix, &call(ToolName::FormulatePlan, json!({"plan":"do it"})));
        assert_eq!(ok.plan.as_deref(), Some("do it"));
        let empty = ctx.execute(AgentMode::RepairFix, &call(ToolName::FormulatePlan, json!({"plan":"  "})));
        assert!(empty.plan.is_none());
        let classify = ctx.execute(AgentMode::Classify, &call(ToolName::FormulatePlan, json!({"plan":"x"})));
        assert!(classify.output.contains("unavailable"));
    }

    #[test]
    fn declaration_heuristics() {
        assert!(declares("public int _number;", "_number"));
        assert!(declares("    private final String enchantName;", "enchantName"));
        assert!(declares("public class ChangeInfo {", "ChangeInfo"));
        assert!(declares("  public Map<String, Integer> counts = new HashMap<>();", "counts"));
        assert!(declares("def helper(x):", "helper"));
        assert!(!declares("return id(info._number);", "id"));
        assert!(!declares("    x = _number;", "_number"));
    }
}
