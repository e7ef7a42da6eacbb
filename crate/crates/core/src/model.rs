//! Domain types shared by every stage: warnings, reports, classifications and
//! run outcomes.
//!
//! Warnings and reports use a line-delimited JSON encoding. A report file is an
//! optional header record (`analyzer_id`, `analyzed_commit`) followed by one
//! warning record per line.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::edit::FixSpec;
use crate::gateway::TokenUsage;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` is invalid: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("start_line must be >= 1, got {0}")]
    StartLineOutOfRange(i64),
    #[error("malformed record at byte offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

/// Category of the violated rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleType {
    CodeSmell,
    Bug,
    SecurityHotspot,
    Vulnerability,
}

impl RuleType {
    pub const ALL: [RuleType; 4] = [
        RuleType::CodeSmell,
        RuleType::Bug,
        RuleType::SecurityHotspot,
        RuleType::Vulnerability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleType::CodeSmell => "code_smell",
            RuleType::Bug => "bug",
            RuleType::SecurityHotspot => "security_hotspot",
            RuleType::Vulnerability => "vulnerability",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RuleType::CodeSmell => "Code smell",
            RuleType::Bug => "Bug",
            RuleType::SecurityHotspot => "Security hotspot",
            RuleType::Vulnerability => "Vulnerability",
        }
    }

    /// Accepts the snake_case names as well as the spellings analyzers
    /// commonly emit ("CODE_SMELL", "Code smell", "security-hotspot").
    /// Anything else maps to `CodeSmell`.
    pub fn parse_lenient(raw: &str) -> RuleType {
        let norm: String = raw
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        match norm.as_str() {
            "code_smell" | "smell" => RuleType::CodeSmell,
            "bug" => RuleType::Bug,
            "security_hotspot" | "hotspot" => RuleType::SecurityHotspot,
            "vulnerability" => RuleType::Vulnerability,
            _ => {
                tracing::info!(rule_type = raw, "unknown rule type, treating as code_smell");
                RuleType::CodeSmell
            }
        }
    }
}

impl fmt::Display for RuleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One static-analysis finding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Warning {
    pub repository: String,
    pub rule_key: String,
    pub file_path: String,
    pub start_line: u32,
    pub rule_name: String,
    pub specific_message: String,
    pub rule_type: RuleType,
}

impl<'de> Deserialize<'de> for Warning {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Warning::from_value(&value).map_err(serde::de::Error::custom)
    }
}

fn text_field(obj: &serde_json::Map<String, Value>, field: &'static str) -> Result<String, ModelError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(ModelError::MissingField(field)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(ModelError::InvalidField {
            field,
            reason: format!("expected a string, found {other}"),
        }),
    }
}

impl Warning {
    /// Builds a warning from a decoded record, checking every field.
    pub fn from_value(value: &Value) -> Result<Warning, ModelError> {
        let obj = value.as_object().ok_or(ModelError::InvalidField {
            field: "record",
            reason: "expected an object".into(),
        })?;
        let repository = text_field(obj, "repository")?;
        let rule_key = text_field(obj, "rule_key")?;
        if rule_key.is_empty() {
            return Err(ModelError::InvalidField {
                field: "rule_key",
                reason: "must not be empty".into(),
            });
        }
        let file_path = text_field(obj, "file_path")?;
        let start_line = match obj.get("start_line") {
            None | Some(Value::Null) => return Err(ModelError::MissingField("start_line")),
            Some(v) => match v.as_i64() {
                Some(n) if n < 1 => return Err(ModelError::StartLineOutOfRange(n)),
                Some(n) if n > u32::MAX as i64 => {
                    return Err(ModelError::InvalidField {
                        field: "start_line",
                        reason: format!("{n} is too large"),
                    })
                }
                Some(n) => n as u32,
                None => {
                    return Err(ModelError::InvalidField {
                        field: "start_line",
                        reason: format!("expected an integer, found {v}"),
                    })
                }
            },
        };
        let rule_name = text_field(obj, "rule_name")?;
        let specific_message = text_field(obj, "specific_message")?;
        let rule_type = RuleType::parse_lenient(&text_field(obj, "rule_type")?);
        Ok(Warning {
            repository,
            rule_key,
            file_path,
            start_line,
            rule_name,
            specific_message,
            rule_type,
        })
    }

    /// Identity used when diffing reports: messages are deliberately ignored.
    pub fn key(&self) -> (&str, &str, u32) {
        (&self.file_path, &self.rule_key, self.start_line)
    }

    /// Filesystem-safe identifier, stable for a given (file, line, rule).
    pub fn slug(&self) -> String {
        sanitize(&format!("{}:{}:{}", self.file_path, self.start_line, self.rule_key))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("warning serializes")
    }

    pub fn location(&self) -> String {
        format!("{}:{}", self.file_path, self.start_line)
    }
}

pub(crate) fn sanitize(raw: &str) -> String {
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Parses a single warning record.
pub fn parse_warning(record: &str) -> Result<Warning, ModelError> {
    let value: Value = serde_json::from_str(record).map_err(|e| ModelError::Syntax {
        offset: byte_offset(record, e.line(), e.column()),
        message: e.to_string(),
    })?;
    Warning::from_value(&value)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    offset
}

/// A rule the analyzer enforces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub key: String,
    pub name: String,
    pub documentation: String,
    pub rule_type: RuleType,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub analyzer_id: String,
    pub analyzed_commit: String,
    pub warnings: Vec<Warning>,
}

#[derive(Serialize, Deserialize)]
struct ReportHeader {
    analyzer_id: String,
    analyzed_commit: String,
    warning_count: usize,
}

impl AnalysisReport {
    pub fn new(analyzer_id: impl Into<String>, analyzed_commit: impl Into<String>, warnings: Vec<Warning>) -> Self {
        report_sort(AnalysisReport {
            analyzer_id: analyzer_id.into(),
            analyzed_commit: analyzed_commit.into(),
            warnings,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.warnings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.warnings.len()
    }

    pub fn to_jsonl(&self) -> String {
        let header = ReportHeader {
            analyzer_id: self.analyzer_id.clone(),
            analyzed_commit: self.analyzed_commit.clone(),
            warning_count: self.warnings.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for w in &self.warnings {
            out.push_str(&w.to_json_line());
            out.push('\n');
        }
        out
    }

    /// Reads the line-delimited encoding. The header is optional so that
    /// external tools may emit bare warning records.
    pub fn from_jsonl(text: &str) -> Result<AnalysisReport, ModelError> {
        let mut report = AnalysisReport::default();
        let mut offset = 0usize;
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len();
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(trimmed).map_err(|e| ModelError::Syntax {
                offset: start + (line.len() - line.trim_start().len()) + e.column().saturating_sub(1),
                message: e.to_string(),
            })?;
            let is_header = value.get("analyzer_id").is_some() && value.get("rule_key").is_none();
            if is_header {
                let header: ReportHeader = serde_json::from_value(value).map_err(|e| ModelError::Syntax {
                    offset: start,
                    message: e.to_string(),
                })?;
                report.analyzer_id = header.analyzer_id;
                report.analyzed_commit = header.analyzed_commit;
                continue;
            }
            let warning = Warning::from_value(&value).map_err(|e| match e {
                ModelError::Syntax { .. } => e,
                other => ModelError::Syntax {
                    offset: start,
                    message: other.to_string(),
                },
            })?;
            report.warnings.push(warning);
        }
        Ok(report_sort(report))
    }

    /// Number of warnings per rule key, in key order.
    pub fn counts_by_rule(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for w in &self.warnings {
            *counts.entry(w.rule_key.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

/// Sorts by (file_path, start_line, rule_key); the remaining fields break ties
/// so the order is total.
pub fn report_sort(mut report: AnalysisReport) -> AnalysisReport {
    report.warnings.sort_by(|a, b| {
        (
            &a.file_path,
            a.start_line,
            &a.rule_key,
            &a.specific_message,
            &a.rule_name,
            a.rule_type,
            &a.repository,
        )
            .cmp(&(
                &b.file_path,
                b.start_line,
                &b.rule_key,
                &b.specific_message,
                &b.rule_name,
                b.rule_type,
                &b.repository,
            ))
    });
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TruePositive,
    FalsePositive,
}

impl Verdict {
    pub fn parse(raw: &str) -> Option<Verdict> {
        let norm = raw.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        match norm.as_str() {
            "true_positive" | "tp" => Some(Verdict::TruePositive),
            "false_positive" | "fp" => Some(Verdict::FalsePositive),
            _ => None,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Verdict::TruePositive => "TP",
            Verdict::FalsePositive => "FP",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::TruePositive => "true positive",
            Verdict::FalsePositive => "false positive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAnswer {
    pub answer: Answer,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub rationale: String,
    pub question_answers: [QuestionAnswer; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleCounts {
    pub classification: u32,
    pub repair: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum RunStatus {
    Approved,
    /// The repair budget ran out without an approved fix.
    NotApproved,
    /// The run was aborted by an environment or gateway failure.
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub warning: Warning,
    pub classification: Classification,
    pub classification_budget_exhausted: bool,
    pub final_fix: Option<FixSpec>,
    pub approved: bool,
    pub status: RunStatus,
    pub cycles_used: CycleCounts,
    pub write_fix_calls: u32,
    pub last_feedback: Option<String>,
    pub token_usage: TokenUsage,
    pub cost_usd: f64,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
}

impl RunOutcome {
    /// Equality on everything a replay must reproduce; wall time is excluded.
    pub fn same_result(&self, other: &RunOutcome) -> bool {
        let mut a = self.clone();
        a.wall_time = Duration::ZERO;
        let mut b = other.clone();
        b.wall_time = Duration::ZERO;
        a == b
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(secs.max(0.0)))
    }
}
