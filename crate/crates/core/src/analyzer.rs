//! Producing analysis reports.
//!
//! Two analyzers sit behind [`analyze`]: a small built-in reference analyzer
//! whose rules are pure functions of a file's lines, and an adapter that runs
//! an external tool and reads back a report in this crate's line-delimited
//! format. Both drop warnings silenced by suppression markers.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::edit::split_lines;
use crate::model::{sanitize, AnalysisReport, ModelError, Rule, RuleType, Warning};
use crate::workspace::{self, default_source_extensions, InfraError};

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("analyzer configuration: {0}")]
    Config(String),
    #[error("project root `{0}` does not exist")]
    MissingRoot(PathBuf),
    #[error("external analyzer exited with status {status:?}:\n{output}")]
    Failed { status: Option<i32>, output: String },
    #[error(transparent)]
    Infra(#[from] InfraError),
    #[error("cannot read report `{path}`: {source}")]
    ReadReport {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse report: {0}")]
    Parse(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzerKind {
    #[default]
    Reference,
    External,
}

/// How source code silences warnings. Defaults are SonarQube's Java forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuppressionSyntax {
    /// Marker that silences every warning on its line.
    pub inline_marker: String,
    /// Annotation name whose string arguments are rule keys silenced within
    /// the annotated construct.
    pub scope_annotation: String,
}

impl Default for SuppressionSyntax {
    fn default() -> Self {
        SuppressionSyntax {
            inline_marker: "//NOSONAR".into(),
            scope_annotation: "@SuppressWarnings".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    pub kind: AnalyzerKind,
    /// Template with `{project_root}` and `{report_out}` placeholders.
    pub external_command: Option<String>,
    pub report_path: Option<PathBuf>,
    pub external_timeout_secs: u64,
    pub enabled_rules: Option<BTreeSet<String>>,
    pub suppression: SuppressionSyntax,
    /// Value stored in the `repository` field of produced warnings.
    pub repository: String,
    pub source_extensions: Vec<String>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            kind: AnalyzerKind::Reference,
            external_command: None,
            report_path: None,
            external_timeout_secs: 600,
            enabled_rules: None,
            suppression: SuppressionSyntax::default(),
            repository: "local".into(),
            source_extensions: default_source_extensions(),
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<(), AnalyzerError> {
        if self.kind == AnalyzerKind::External {
            if self.external_command.as_deref().is_none_or(|c| c.trim().is_empty()) {
                return Err(AnalyzerError::Config("an external analyzer needs `external_command`".into()));
            }
            if self.report_path.is_none() {
                return Err(AnalyzerError::Config("an external analyzer needs `report_path`".into()));
            }
        }
        Ok(())
    }

    fn rule_enabled(&self, key: &str) -> bool {
        self.enabled_rules.as_ref().is_none_or(|set| set.contains(key))
    }
}

pub fn analyze(project_root: &Path, config: &AnalyzerConfig) -> Result<AnalysisReport, AnalyzerError> {
    config.validate()?;
    if !project_root.is_dir() {
        return Err(AnalyzerError::MissingRoot(project_root.to_path_buf()));
    }
    match config.kind {
        AnalyzerKind::Reference => Ok(run_reference(project_root, config)),
        AnalyzerKind::External => run_external(project_root, config),
    }
}

fn run_reference(root: &Path, config: &AnalyzerConfig) -> AnalysisReport {
    let mut warnings = Vec::new();
    let mut hasher = Sha256::new();
    for rel in workspace::source_files(root, &config.source_extensions) {
        let Ok(bytes) = fs::read(root.join(&rel)) else { continue };
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        hasher.update(&bytes);
        let content = String::from_utf8_lossy(&bytes);
        let (lines, _) = split_lines(&content);
        let ext = Path::new(&rel)
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut raw = Vec::new();
        for rule in REFERENCE_RULES.iter() {
            if !config.rule_enabled(rule.key) || !rule.applies_to(&ext) {
                continue;
            }
            for (line, message) in (rule.check)(&lines) {
                raw.push(Warning {
                    repository: config.repository.clone(),
                    rule_key: rule.key.to_string(),
                    file_path: rel.clone(),
                    start_line: line,
                    rule_name: rule.name.to_string(),
                    specific_message: message,
                    rule_type: rule.rule_type,
                });
            }
        }
        warnings.extend(honor_suppressions(&lines, raw, &config.suppression));
    }
    let commit = hex::encode(hasher.finalize());
    AnalysisReport::new("reference", format!("content:{}", &commit[..16]), warnings)
}

fn run_external(root: &Path, config: &AnalyzerConfig) -> Result<AnalysisReport, AnalyzerError> {
    let template = config.external_command.as_deref().unwrap_or_default();
    let report_path = config.report_path.clone().unwrap_or_default();
    let report_path = if report_path.is_absolute() {
        report_path
    } else {
        root.join(report_path)
    };
    let command = workspace::render_template(template, &[("project_root", root), ("report_out", &report_path)]);
    let output = workspace::run_shell(&command, root, Duration::from_secs(config.external_timeout_secs))?;
    if !output.success() {
        return Err(AnalyzerError::Failed {
            status: output.status,
            output: format!("{}{}", output.stdout, output.stderr),
        });
    }
    let text = fs::read_to_string(&report_path).map_err(|source| AnalyzerError::ReadReport {
        path: report_path.clone(),
        source,
    })?;
    let report = AnalysisReport::from_jsonl(&text)?;
    let mut kept = Vec::new();
    let mut by_file: std::collections::BTreeMap<String, Vec<Warning>> = Default::default();
    for w in report.warnings {
        by_file.entry(w.file_path.clone()).or_default().push(w);
    }
    for (file, ws) in by_file {
        match fs::read(root.join(&file)) {
            Ok(bytes) => {
                let content = String::from_utf8_lossy(&bytes);
                let (lines, _) = split_lines(&content);
                kept.extend(honor_suppressions(&lines, ws, &config.suppression));
            }
            Err(_) => kept.extend(ws),
        }
    }
    let analyzer_id = if report.analyzer_id.is_empty() {
        "external".to_string()
    } else {
        report.analyzer_id
    };
    Ok(AnalysisReport::new(analyzer_id, report.analyzed_commit, kept))
}

/// Drops warnings silenced by the inline marker on their line, or by a
/// scope annotation naming their rule whose construct covers their line.
pub fn honor_suppressions(file_lines: &[&str], raw_warnings: Vec<Warning>, syntax: &SuppressionSyntax) -> Vec<Warning> {
    let scopes = suppression_scopes(file_lines, syntax);
    raw_warnings
        .into_iter()
        .filter(|w| {
            let idx = w.start_line as usize;
            if idx >= 1
                && idx <= file_lines.len()
                && !syntax.inline_marker.is_empty()
                && file_lines[idx - 1].contains(&syntax.inline_marker)
            {
                return false;
            }
            !scopes
                .iter()
                .any(|s| s.start <= w.start_line && w.start_line <= s.end && s.rules.iter().any(|r| r == &w.rule_key))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuppressionScope {
    pub start: u32,
    pub end: u32,
    pub rules: Vec<String>,
}

static STRING_LITERAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"\\]*(?:\\.[^"\\]*)*)""#).unwrap());

/// Locates scope annotations and the line range of the construct each one
/// annotates: up to the first `;` when no block opens first, otherwise to the
/// brace closing the first block.
pub fn suppression_scopes(file_lines: &[&str], syntax: &SuppressionSyntax) -> Vec<SuppressionScope> {
    let mut scopes = Vec::new();
    if syntax.scope_annotation.is_empty() {
        return scopes;
    }
    for (idx, line) in file_lines.iter().enumerate() {
        let Some(pos) = line.find(&syntax.scope_annotation) else { continue };
        let after = &line[pos + syntax.scope_annotation.len()..];
        let Some(open) = after.find('(') else { continue };
        let args_start = pos + syntax.scope_annotation.len() + open;
        let Some((args, close_line, close_col)) = annotation_args(file_lines, idx, args_start) else {
            continue;
        };
        let rules: Vec<String> = STRING_LITERAL.captures_iter(&args).map(|c| c[1].to_string()).collect();
        if rules.is_empty() {
            continue;
        }
        let end = construct_end(file_lines, close_line, close_col + 1);
        scopes.push(SuppressionScope {
            start: idx as u32 + 1,
            end,
            rules,
        });
    }
    scopes
}

/// Text between the parentheses starting at (line, col), possibly spanning
/// lines; returns the position of the closing parenthesis.
fn annotation_args(lines: &[&str], line: usize, col: usize) -> Option<(String, usize, usize)> {
    let mut depth = 0;
    let mut out = String::new();
    let mut in_string = false;
    for (li, text) in lines.iter().enumerate().skip(line) {
        let start = if li == line { col } else { 0 };
        let mut escaped = false;
        for (ci, ch) in text.char_indices().filter(|(i, _)| *i >= start) {
            if in_string {
                out.push(ch);
                if escaped {
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == '"' {
                    in_string = false;
                }
                continue;
            }
            match ch {
                '"' => {
                    in_string = true;
                    out.push(ch);
                }
                '(' => {
                    depth += 1;
                    if depth > 1 {
                        out.push(ch);
                    }
                }
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some((out, li, ci));
                    }
                    out.push(ch);
                }
                _ => out.push(ch),
            }
        }
        out.push('\n');
    }
    None
}

fn construct_end(lines: &[&str], line: usize, col: usize) -> u32 {
    let mut depth = 0i32;
    for (li, text) in lines.iter().enumerate().skip(line) {
        let start = if li == line { col } else { 0 };
        let mut in_string = false;
        let mut escaped = false;
        let mut prev = '\0';
        for (_, ch) in text.char_indices().filter(|(i, _)| *i >= start) {
            if in_string {
                if escaped {
                    escaped = false;
                } else if ch == '\\' {
                    escaped = true;
                } else if ch == '"' {
                    in_string = false;
                }
                prev = ch;
                continue;
            }
            if prev == '/' && ch == '/' {
                break;
            }
            match ch {
                '"' => in_string = true,
                ';' if depth == 0 => return li as u32 + 1,
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth <= 0 {
                        return li as u32 + 1;
                    }
                }
                _ => {}
            }
            prev = ch;
        }
    }
    lines.len() as u32
}

/// Marker returned in place of missing rule documentation.
pub fn missing_documentation_marker(rule_key: &str) -> String {
    format!("No documentation available for rule {rule_key}.")
}

/// Loads a rule's markdown documentation from `docs_dir`.
///
/// The file name is the sanitized rule key plus `.md` (`java:S1104` →
/// `java_S1104.md`). A key without a repository prefix also matches a
/// prefixed file (`S1104` → `java_S1104.md`) and vice versa. A missing file
/// yields empty documentation.
pub fn lookup_rule(rule_key: &str, docs_dir: &Path) -> Rule {
    let builtin = REFERENCE_RULES
        .iter()
        .find(|r| r.key == rule_key || r.key.rsplit(':').next() == Some(rule_key));
    let documentation = find_doc_file(rule_key, docs_dir)
        .and_then(|p| fs::read_to_string(p).ok())
        .unwrap_or_default();
    let name = documentation
        .lines()
        .map(|l| l.trim().trim_start_matches('#').trim())
        .find(|l| !l.is_empty())
        .map(String::from)
        .or_else(|| builtin.map(|r| r.name.to_string()))
        .unwrap_or_default();
    Rule {
        key: rule_key.to_string(),
        name,
        documentation,
        rule_type: builtin.map(|r| r.rule_type).unwrap_or(RuleType::CodeSmell),
    }
}

fn find_doc_file(rule_key: &str, docs_dir: &Path) -> Option<PathBuf> {
    if rule_key.trim().is_empty() {
        return None;
    }
    let exact = docs_dir.join(format!("{}.md", sanitize(rule_key)));
    if exact.is_file() {
        return Some(exact);
    }
    if let Some((_, bare)) = rule_key.split_once(':') {
        let p = docs_dir.join(format!("{}.md", sanitize(bare)));
        if p.is_file() {
            return Some(p);
        }
    }
    let suffix = format!("_{}.md", sanitize(rule_key));
    let mut candidates: Vec<PathBuf> = fs::read_dir(docs_dir)
        .ok()?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(&suffix)))
        .collect();
    candidates.sort();
    candidates.into_iter().next()
}

/// A rule of the built-in analyzer.
pub struct ReferenceRule {
    pub key: &'static str,
    pub name: &'static str,
    pub rule_type: RuleType,
    /// Restricts the rule to these file extensions; `None` means all.
    pub extensions: Option<&'static [&'static str]>,
    pub check: fn(&[&str]) -> Vec<(u32, String)>,
}

impl ReferenceRule {
    fn applies_to(&self, ext: &str) -> bool {
        self.extensions.is_none_or(|exts| exts.contains(&ext))
    }
}

pub const MAX_LINE_LENGTH: usize = 120;

pub static REFERENCE_RULES: LazyLock<Vec<ReferenceRule>> = LazyLock::new(|| {
    vec![
        ReferenceRule {
            key: "R-LONGLINE",
            name: "Lines should not be too long",
            rule_type: RuleType::CodeSmell,
            extensions: None,
            check: check_long_lines,
        },
        ReferenceRule {
            key: "R-TRAILING-WS",
            name: "Lines should not end with trailing whitespace",
            rule_type: RuleType::CodeSmell,
            extensions: None,
            check: |lines| {
                numbered(lines)
                    .filter(|(_, l)| l.trim_end_matches('\r').ends_with([' ', '\t']))
                    .map(|(n, _)| (n, "Remove the trailing whitespace at the end of this line.".into()))
                    .collect()
            },
        },
        ReferenceRule {
            key: "R-TAB",
            name: "Tabulation characters should not be used",
            rule_type: RuleType::CodeSmell,
            extensions: None,
            check: |lines| {
                numbered(lines)
                    .filter(|(_, l)| l.contains('\t'))
                    .map(|(n, _)| (n, "Replace the tab characters on this line with spaces.".into()))
                    .collect()
            },
        },
        ReferenceRule {
            key: "R-TODO",
            name: "Track uses of \"TODO\" tags",
            rule_type: RuleType::CodeSmell,
            extensions: None,
            check: check_todo,
        },
        ReferenceRule {
            key: "R-DOUBLE-BLANK",
            name: "Consecutive blank lines should be collapsed",
            rule_type: RuleType::CodeSmell,
            extensions: None,
            check: |lines| {
                let mut out = Vec::new();
                for i in 1..lines.len() {
                    if lines[i].trim().is_empty() && lines[i - 1].trim().is_empty() {
                        out.push((i as u32 + 1, "Remove this redundant blank line.".into()));
                    }
                }
                out
            },
        },
        ReferenceRule {
            key: "java:S1104",
            name: "Class variable fields should not have public accessibility",
            rule_type: RuleType::CodeSmell,
            extensions: Some(&["java"]),
            check: check_public_fields,
        },
        ReferenceRule {
            key: "java:S100",
            name: "Method names should comply with a naming convention",
            rule_type: RuleType::CodeSmell,
            extensions: Some(&["java"]),
            check: check_method_names,
        },
        ReferenceRule {
            key: "java:S1068",
            name: "Unused \"private\" fields should be removed",
            rule_type: RuleType::CodeSmell,
            extensions: Some(&["java"]),
            check: check_unused_private_fields,
        },
    ]
});

pub fn reference_rule_catalog() -> Vec<Rule> {
    REFERENCE_RULES
        .iter()
        .map(|r| Rule {
            key: r.key.to_string(),
            name: r.name.to_string(),
            documentation: String::new(),
            rule_type: r.rule_type,
        })
        .collect()
}

fn numbered<'a>(lines: &'a [&'a str]) -> impl Iterator<Item = (u32, &'a str)> + 'a {
    lines.iter().enumerate().map(|(i, l)| (i as u32 + 1, *l))
}

fn check_long_lines(lines: &[&str]) -> Vec<(u32, String)> {
    numbered(lines)
        .filter_map(|(n, l)| {
            let len = l.trim_end_matches('\r').chars().count();
            (len > MAX_LINE_LENGTH).then(|| {
                (
                    n,
                    format!("Split this {len} characters long line (which is greater than {MAX_LINE_LENGTH} authorized)."),
                )
            })
        })
        .collect()
}

static TODO_COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(//|#|/\*|\*)\s*.*\bTODO\b").unwrap());

fn check_todo(lines: &[&str]) -> Vec<(u32, String)> {
    numbered(lines)
        .filter(|(_, l)| TODO_COMMENT.is_match(l))
        .map(|(n, _)| (n, "Complete the task associated to this \"TODO\" comment.".into()))
        .collect()
}

static FIELD_DECL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^\s*((?:(?:public|protected|private|static|final|transient|volatile)\s+)+)[\w<>\[\],.?]+(?:\s*<[^;=()]*>)?\s+(\w+)\s*(=[^;]*)?;",
    )
    .unwrap()
});

fn check_public_fields(lines: &[&str]) -> Vec<(u32, String)> {
    numbered(lines)
        .filter_map(|(n, l)| {
            let caps = FIELD_DECL.captures(l)?;
            let modifiers: Vec<&str> = caps[1].split_whitespace().collect();
            let public = modifiers.contains(&"public");
            let constant = modifiers.contains(&"final");
            (public && !constant).then(|| {
                (
                    n,
                    format!(
                        "Make {} a static final constant or non-public and provide accessors if needed.",
                        &caps[2]
                    ),
                )
            })
        })
        .collect()
}

static METHOD_DECL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:(?:public|protected|private|static|final|abstract|synchronized|native|default)\s+)+(?:<[^>]*>\s+)?[\w<>\[\],.?]+\s+(\w+)\s*\(").unwrap()
});
static CAMEL_CASE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[a-z][a-zA-Z0-9]*$").unwrap());

fn check_method_names(lines: &[&str]) -> Vec<(u32, String)> {
    numbered(lines)
        .filter_map(|(n, l)| {
            let caps = METHOD_DECL.captures(l)?;
            let name = &caps[1];
            (!CAMEL_CASE.is_match(name)).then(|| {
                (
                    n,
                    format!("Rename this method name \"{name}\" to match the regular expression '^[a-z][a-zA-Z0-9]*$'."),
                )
            })
        })
        .collect()
}

fn check_unused_private_fields(lines: &[&str]) -> Vec<(u32, String)> {
    let text = lines.join("\n");
    numbered(lines)
        .filter_map(|(n, l)| {
            let caps = FIELD_DECL.captures(l)?;
            if !caps[1].split_whitespace().any(|m| m == "private") {
                return None;
            }
            let name = &caps[2];
            let word = Regex::new(&format!(r"\b{}\b", regex::escape(name))).ok()?;
            (word.find_iter(&text).count() == 1).then(|| (n, format!("Remove this unused \"{name}\" private field.")))
        })
        .collect()
}
