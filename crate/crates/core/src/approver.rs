//! Validation of a proposed fix: build, re-analysis with line mapping, tests.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{self, AnalyzerConfig};
use crate::edit::LineShiftMap;
use crate::model::{AnalysisReport, Warning};
use crate::workspace::ProjectHandle;

/// The four check sets of the approver ablation, from strictest to none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSet {
    Full,
    WithoutTests,
    WithoutAnalysisAndTests,
    None,
}

impl CheckSet {
    pub const ALL: [CheckSet; 4] = [
        CheckSet::Full,
        CheckSet::WithoutTests,
        CheckSet::WithoutAnalysisAndTests,
        CheckSet::None,
    ];

    pub fn config(self) -> ApproverConfig {
        let (b, w, t) = match self {
            CheckSet::Full => (true, true, true),
            CheckSet::WithoutTests => (true, true, false),
            CheckSet::WithoutAnalysisAndTests => (true, false, false),
            CheckSet::None => (false, false, false),
        };
        ApproverConfig {
            check_build: b,
            check_warnings: w,
            check_tests: t,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CheckSet::Full => "full",
            CheckSet::WithoutTests => "without_tests",
            CheckSet::WithoutAnalysisAndTests => "without_analysis_and_tests",
            CheckSet::None => "none",
        }
    }

    pub fn parse(raw: &str) -> Option<CheckSet> {
        let norm = raw.trim().to_ascii_lowercase().replace('-', "_");
        CheckSet::ALL.into_iter().find(|c| c.as_str() == norm)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("checks can only be disabled from the end of build, analysis, tests (got build={0}, analysis={1}, tests={2})")]
pub struct NotASuffixAblation(pub bool, pub bool, pub bool);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproverConfig {
    pub check_build: bool,
    pub check_warnings: bool,
    pub check_tests: bool,
}

impl Default for ApproverConfig {
    fn default() -> Self {
        CheckSet::Full.config()
    }
}

impl ApproverConfig {
    pub fn check_set(&self) -> Result<CheckSet, NotASuffixAblation> {
        CheckSet::ALL.into_iter().find(|c| c.config() == *self).ok_or(NotASuffixAblation(
            self.check_build,
            self.check_warnings,
            self.check_tests,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Build,
    Analysis,
    Tests,
    AllPassed,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Build => "build",
            Stage::Analysis => "analysis",
            Stage::Tests => "tests",
            Stage::AllPassed => "all_passed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalVerdict {
    pub approved: bool,
    pub stage: Stage,
    pub feedback: String,
    pub new_warnings: Vec<Warning>,
    /// False whenever the analysis check did not run.
    pub target_removed: bool,
    /// The failing check could not run at all; the patch is not at fault.
    #[serde(default)]
    pub environmental: bool,
}

impl ApprovalVerdict {
    fn rejected(stage: Stage, feedback: String) -> ApprovalVerdict {
        ApprovalVerdict {
            approved: false,
            stage,
            feedback,
            new_warnings: Vec::new(),
            target_removed: false,
            environmental: false,
        }
    }

    fn environmental(stage: Stage, error: impl std::fmt::Display) -> ApprovalVerdict {
        let feedback = format!(
            "The {} check could not be run because of a problem in the environment, not in your fix: {error}",
            stage.as_str()
        );
        ApprovalVerdict {
            environmental: true,
            ..ApprovalVerdict::rejected(stage, feedback)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WarningDiff {
    pub target_removed: bool,
    pub new_warnings: Vec<Warning>,
}

fn mapped(maps: &BTreeMap<String, LineShiftMap>, file: &str, line: u32, f: fn(&LineShiftMap, u32) -> Option<u32>) -> Option<u32> {
    match maps.get(file) {
        Some(m) => f(m, line),
        None => Some(line),
    }
}

/// Compares a report taken after a fix against the baseline.
///
/// Warnings are identified by (file, rule, line) in original coordinates and
/// matched as a multiset. A warning on an inserted line is always new. The
/// target counts as removed when its line was deleted, or when no warning of
/// its rule sits on its forward-mapped line.
pub fn diff_warnings(
    before: &AnalysisReport,
    after: &AnalysisReport,
    target: &Warning,
    shift_maps: &BTreeMap<String, LineShiftMap>,
) -> WarningDiff {
    let target_removed = match mapped(shift_maps, &target.file_path, target.start_line, LineShiftMap::forward) {
        None => true,
        Some(line) => !after
            .warnings
            .iter()
            .any(|w| w.file_path == target.file_path && w.rule_key == target.rule_key && w.start_line == line),
    };

    let mut baseline: HashMap<(&str, &str, u32), usize> = HashMap::new();
    for w in &before.warnings {
        *baseline.entry((&w.file_path, &w.rule_key, w.start_line)).or_default() += 1;
    }
    let mut new_warnings = Vec::new();
    for w in &after.warnings {
        let matched = mapped(shift_maps, &w.file_path, w.start_line, LineShiftMap::backward).is_some_and(|line| {
            match baseline.get_mut(&(w.file_path.as_str(), w.rule_key.as_str(), line)) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    true
                }
                _ => false,
            }
        });
        if !matched {
            new_warnings.push(w.clone());
        }
    }
    WarningDiff {
        target_removed,
        new_warnings,
    }
}

pub fn render_analysis_feedback(target: &Warning, diff: &WarningDiff) -> String {
    let mut out = String::from("The fix was rejected by the static analysis check.\n");
    if !diff.target_removed {
        let _ = writeln!(
            out,
            "The target warning is still present: {} at {} ({}).",
            target.rule_key,
            target.location(),
            target.specific_message
        );
    }
    if !diff.new_warnings.is_empty() {
        let _ = writeln!(out, "The fix introduces {} new warning(s):", diff.new_warnings.len());
        for w in &diff.new_warnings {
            let _ = writeln!(out, "- {} at {}: {}", w.rule_key, w.location(), w.specific_message);
        }
    }
    out
}

/// Runs the enabled checks against the workspace, comparing re-analysis
/// results with a fixed baseline report.
#[derive(Debug, Clone)]
pub struct Approver {
    pub analyzer: AnalyzerConfig,
    pub baseline: AnalysisReport,
    pub config: ApproverConfig,
}

impl Approver {
    pub fn new(analyzer: AnalyzerConfig, baseline: AnalysisReport, config: ApproverConfig) -> Approver {
        Approver {
            analyzer,
            baseline,
            config,
        }
    }

    pub fn with_config(&self, config: ApproverConfig) -> Approver {
        Approver { config, ..self.clone() }
    }

    /// Checks the fix currently applied to `handle`. Checks run in the order
    /// build, analysis, tests and stop at the first failure.
    pub fn approve(&self, handle: &ProjectHandle, target: &Warning, shift_maps: &BTreeMap<String, LineShiftMap>) -> ApprovalVerdict {
        if self.config.check_build {
            match handle.run_build() {
                Err(e) => return ApprovalVerdict::environmental(Stage::Build, e),
                Ok(fb) if !fb.success => {
                    return ApprovalVerdict::rejected(
                        Stage::Build,
                        format!("The fix was rejected because the build failed.\n{}", fb.render()),
                    )
                }
                Ok(_) => {}
            }
        }
        let mut target_removed = false;
        if self.config.check_warnings {
            let after = match analyzer::analyze(handle.root(), &self.analyzer) {
                Ok(r) => r,
                Err(e) => return ApprovalVerdict::environmental(Stage::Analysis, e),
            };
            let diff = diff_warnings(&self.baseline, &after, target, shift_maps);
            if !diff.target_removed || !diff.new_warnings.is_empty() {
                let feedback = render_analysis_feedback(target, &diff);
                return ApprovalVerdict {
                    new_warnings: diff.new_warnings,
                    target_removed: diff.target_removed,
                    ..ApprovalVerdict::rejected(Stage::Analysis, feedback)
                };
            }
            target_removed = true;
        }
        if self.config.check_tests {
            match handle.run_tests() {
                Err(e) => {
                    return ApprovalVerdict {
                        target_removed,
                        ..ApprovalVerdict::environmental(Stage::Tests, e)
                    }
                }
                Ok(fb) if !fb.success => {
                    return ApprovalVerdict {
                        target_removed,
                        ..ApprovalVerdict::rejected(Stage::Tests, format!("The fix was rejected because tests failed.\n{}", fb.render()))
                    }
                }
                Ok(_) => {}
            }
        }
        ApprovalVerdict {
            approved: true,
            stage: Stage::AllPassed,
            feedback: "The fix was approved: all enabled checks passed.".into(),
            new_warnings: Vec::new(),
            target_removed,
            environmental: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::{apply_fix, parse_fix};
    use crate::model::RuleType;
    use crate::workspace::ProjectProfile;
    use std::fs;

    fn w(file: &str, rule: &str, line: u32) -> Warning {
        Warning {
            repository: "r".into(),
            rule_key: rule.into(),
            file_path: file.into(),
            start_line: line,
            rule_name: String::new(),
            specific_message: "m".into(),
            rule_type: RuleType::CodeSmell,
        }
    }

    fn report(ws: Vec<Warning>) -> AnalysisReport {
        AnalysisReport::new("t", "c", ws)
    }

    #[test]
    fn check_sets_are_suffix_ablations() {
        for c in CheckSet::ALL {
            assert_eq!(c.config().check_set(), Ok(c));
            assert_eq!(CheckSet::parse(c.as_str()), Some(c));
        }
        let odd = ApproverConfig {
            check_build: false,
            check_warnings: true,
            check_tests: true,
        };
        assert!(odd.check_set().is_err());
        assert_eq!(CheckSet::parse("without-tests"), Some(CheckSet::WithoutTests));
    }

    #[test]
    fn removed_target_without_new_warnings() {
        let target = w("F", "R", 82);
        let before = report(vec![target.clone(), w("F", "Q", 90)]);
        let after = report(vec![w("F", "Q", 91)]);
        let mut forward: Vec<Option<u32>> = (1..=100).map(Some).collect();
        for v in forward.iter_mut().skip(15) {
            *v = v.map(|l| l + 1);
        }
        let maps = BTreeMap::from([("F".to_string(), LineShiftMap::from_forward(forward, 101))]);
        let d = diff_warnings(&before, &after, &target, &maps);
        assert!(d.target_removed);
        assert!(d.new_warnings.is_empty());
    }

    #[test]
    fn no_op_fix_keeps_target_and_adds_nothing() {
        let target = w("F", "R", 5);
        let before = report(vec![target.clone(), w("G", "R", 1)]);
        let d = diff_warnings(&before, &before, &target, &BTreeMap::new());
        assert!(!d.target_removed);
        assert!(d.new_warnings.is_empty());
    }

    #[test]
    fn delete_and_reinsert_is_flagged_as_new() {
        // line 3 carries the warning; the fix deletes it and re-inserts the
        // same text before line 6
        let original = "a\nb\nbad\nc\nd\ne\n";
        let fix = parse_fix(r#"[{"file_name":"F","insertions":[{"line_number":6,"new_lines":["bad"]}],"deletions":[3]}]"#).unwrap();
        let (_, map) = crate::edit::apply_to_text(original, &fix.files[0]);
        let unrelated = w("F", "R", 3);
        let target = w("F", "T", 1);
        let before = report(vec![target.clone(), unrelated]);
        let after = report(vec![w("F", "R", 5)]);
        let d = diff_warnings(&before, &after, &target, &BTreeMap::from([("F".to_string(), map)]));
        assert_eq!(d.new_warnings, vec![w("F", "R", 5)]);
        assert!(d.target_removed);
    }

    #[test]
    fn duplicates_are_counted() {
        let target = w("F", "X", 1);
        let before = report(vec![target.clone(), w("F", "R", 4)]);
        let after = report(vec![target.clone(), w("F", "R", 4), w("F", "R", 4)]);
        let d = diff_warnings(&before, &after, &target, &BTreeMap::new());
        assert_eq!(d.new_warnings.len(), 1);
    }

    #[test]
    fn new_warning_in_untouched_file_counts() {
        let target = w("F", "X", 1);
        let before = report(vec![target.clone()]);
        let after = report(vec![w("Other", "R", 2)]);
        let d = diff_warnings(
            &before,
            &after,
            &target,
            &BTreeMap::from([("F".to_string(), LineShiftMap::identity(3))]),
        );
        assert!(d.target_removed);
        assert_eq!(d.new_warnings, vec![w("Other", "R", 2)]);
    }

    #[test]
    fn deleted_target_line_with_reappearing_rule() {
        let target = w("F", "R", 2);
        let before = report(vec![target.clone()]);
        let fix = parse_fix(r#"[{"file_name":"F","insertions":[{"line_number":2,"new_lines":["x"]}],"deletions":[2]}]"#).unwrap();
        let (_, map) = crate::edit::apply_to_text("a\nb\nc\n", &fix.files[0]);
        let after = report(vec![w("F", "R", 2)]);
        let d = diff_warnings(&before, &after, &target, &BTreeMap::from([("F".to_string(), map)]));
        assert!(d.target_removed);
        assert_eq!(d.new_warnings.len(), 1);
    }

    fn java_project(build: &str, test: &str) -> (tempfile::TempDir, ProjectHandle, Approver, Warning) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("A.java"), "class A {\n    public int count;\n}\n").unwrap();
        let profile = ProjectProfile {
            build_command: build.into(),
            test_command: test.into(),
            ..Default::default()
        };
        let analyzer = AnalyzerConfig {
            enabled_rules: Some(["java:S1104".to_string(), "java:S100".to_string()].into()),
            ..Default::default()
        };
        let baseline = analyzer::analyze(dir.path(), &analyzer).unwrap();
        assert_eq!(baseline.len(), 1);
        let target = baseline.warnings[0].clone();
        let handle = ProjectHandle::new(dir.path(), profile);
        (dir, handle, Approver::new(analyzer, baseline, ApproverConfig::default()), target)
    }

    const ENCAPSULATE: &str = r#"[{"file_name":"A.java","insertions":[{"line_number":2,"new_lines":["    private int count;","    public int getCount() { return count; }"]}],"deletions":[2]}]"#;
    const SNAKE: &str = r#"[{"file_name":"A.java","insertions":[{"line_number":2,"new_lines":["    private int count;","    public int get_count() { return count; }","    public void set_count(int c) { count = c; }"]}],"deletions":[2]}]"#;

    #[test]
    fn happy_path_is_approved() {
        let (_d, mut handle, approver, target) = java_project("true", "true");
        let maps = apply_fix(&mut handle, &parse_fix(ENCAPSULATE).unwrap()).unwrap();
        let v = approver.approve(&handle, &target, &maps);
        assert!(v.approved, "{}", v.feedback);
        assert_eq!(v.stage, Stage::AllPassed);
        assert!(v.target_removed);
    }

    #[test]
    fn naming_violations_are_rejected_at_analysis() {
        let (_d, mut handle, approver, target) = java_project("true", "true");
        let maps = apply_fix(&mut handle, &parse_fix(SNAKE).unwrap()).unwrap();
        let v = approver.approve(&handle, &target, &maps);
        assert_eq!(v.stage, Stage::Analysis);
        assert_eq!(v.new_warnings.len(), 2);
        assert!(v.new_warnings.iter().all(|w| w.rule_key == "java:S100"));
        assert!(v.feedback.contains("2 new warning(s)"));
    }

    #[test]
    fn build_failure_short_circuits() {
        let (_d, mut handle, approver, target) = java_project("echo 'A.java:2: error: boom' >&2; exit 1", "exit 99");
        let maps = apply_fix(&mut handle, &parse_fix(SNAKE).unwrap()).unwrap();
        let v = approver.approve(&handle, &target, &maps);
        assert_eq!(v.stage, Stage::Build);
        assert!(!v.environmental);
        assert!(v.feedback.contains("boom"));
    }

    #[test]
    fn missing_tool_is_environmental() {
        let (_d, handle, approver, target) = java_project("definitely-not-a-build-tool-xyz", "true");
        let v = approver.approve(&handle, &target, &BTreeMap::new());
        assert!(v.environmental);
        assert_eq!(v.stage, Stage::Build);
        assert!(v.feedback.contains("not in your fix"));
    }

    #[test]
    fn ablation_is_monotone_on_a_failing_test() {
        let (_d, mut handle, approver, target) = java_project("true", "echo 'FAIL: T.t - nope'; exit 1");
        let maps = apply_fix(&mut handle, &parse_fix(ENCAPSULATE).unwrap()).unwrap();
        let verdicts: Vec<bool> = CheckSet::ALL
            .iter()
            .map(|c| approver.with_config(c.config()).approve(&handle, &target, &maps).approved)
            .collect();
        assert_eq!(verdicts, vec![false, true, true, true]);
        let full = approver.approve(&handle, &target, &maps);
        assert_eq!(full.stage, Stage::Tests);
        assert!(full.target_removed);
    }
}
