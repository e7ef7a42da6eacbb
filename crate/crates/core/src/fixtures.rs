//! Small on-disk projects with toy build and test harnesses and replay
//! scripts, used by the tests, the acceptance suite and the CLI demos.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use thiserror::Error;

use crate::analyzer::{analyze, AnalyzerConfig, AnalyzerError};
use crate::approver::{Approver, ApproverConfig};
use crate::gateway::{GatewayError, LanguageModel, ScriptedGateway};
use crate::model::{AnalysisReport, RuleType, Warning};
use crate::runtime::ToolCall;
use crate::subagents::{RunConfig, Session};
use crate::tools::ToolName;
use crate::workspace::{source_files, ProjectHandle, ProjectProfile, WorkspaceError};

pub const BUILD_SCRIPT: &str = include_str!("../fixtures/build.py");
pub const TEST_SCRIPT: &str = include_str!("../fixtures/test.py");

pub const CHANGE_INFO: &str = "src/main/java/com/google/gerrit/extensions/common/ChangeInfo.java";
pub const CHANGES_REST_CLIENT: &str = "src/main/java/com/urswolfer/gerrit/client/rest/http/changes/ChangesRestClient.java";
pub const REAL_SERVER_TEST: &str = "src/test/java/com/urswolfer/gerrit/client/rest/RealServerTest.java";
pub const ENCHANTMENT_WRAPPER: &str = "src/main/java/dev/enchant/EnchantmentWrapper.java";
pub const ENCHANT_COMMAND: &str = "src/main/java/dev/enchant/EnchantCommand.java";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

/// A generated project plus the replay scripts for its warnings.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub root: PathBuf,
    /// One `<warning slug>.jsonl` per scripted warning; each script holds the
    /// classification responses followed by the repair responses.
    pub scripts_dir: PathBuf,
    pub docs_dir: PathBuf,
    pub analyzer: AnalyzerConfig,
    pub profile: ProjectProfile,
}

impl Fixture {
    fn create(base: &Path, name: &str) -> io::Result<Fixture> {
        let root = base.join("project");
        let scripts_dir = base.join("scripts");
        fs::create_dir_all(&root)?;
        fs::create_dir_all(&scripts_dir)?;
        write_file(&root, ".harness/build.py", BUILD_SCRIPT)?;
        write_file(&root, ".harness/test.py", TEST_SCRIPT)?;
        write_file(&root, ".rules/java_S1104.md", S1104_DOC)?;
        write_file(&root, ".rules/java_S100.md", S100_DOC)?;
        write_file(&root, ".rules/java_S1068.md", S1068_DOC)?;
        Ok(Fixture {
            name: name.to_string(),
            docs_dir: root.join(".rules"),
            analyzer: AnalyzerConfig {
                repository: format!("fixtures/{name}"),
                ..AnalyzerConfig::default()
            },
            profile: ProjectProfile::default(),
            root,
            scripts_dir,
        })
    }

    pub fn baseline(&self) -> Result<AnalysisReport, AnalyzerError> {
        analyze(&self.root, &self.analyzer)
    }

    /// A handle tracking every source file of the project.
    pub fn handle(&self) -> Result<ProjectHandle, WorkspaceError> {
        let files = source_files(&self.root, &self.profile.source_extensions);
        ProjectHandle::snapshot(&self.root, &files, self.profile.clone())
    }

    /// A session over this fixture with the default run configuration.
    pub fn session<'a>(&self, model: &'a dyn LanguageModel, checks: ApproverConfig) -> Result<Session<'a>, FixtureError> {
        Ok(Session {
            model,
            handle: self.handle()?,
            approver: Approver::new(self.analyzer.clone(), self.baseline()?, checks),
            docs_dir: self.docs_dir.clone(),
            config: RunConfig::default(),
        })
    }

    pub fn script_for(&self, warning: &Warning) -> PathBuf {
        self.scripts_dir.join(format!("{}.jsonl", warning.slug()))
    }

    pub fn gateway_for(&self, warning: &Warning) -> Result<ScriptedGateway, GatewayError> {
        ScriptedGateway::load(&self.script_for(warning))
    }

    /// Finds the baseline warning at a location.
    pub fn warning_at(&self, file: &str, line: u32, rule: &str) -> Option<Warning> {
        self.baseline()
            .ok()?
            .warnings
            .into_iter()
            .find(|w| w.file_path == file && w.start_line == line && w.rule_key == rule)
    }

    fn target(&self, file: &str, line: u32, rule: &str) -> Warning {
        Warning {
            repository: self.analyzer.repository.clone(),
            rule_key: rule.to_string(),
            file_path: file.to_string(),
            start_line: line,
            rule_name: String::new(),
            specific_message: String::new(),
            rule_type: RuleType::CodeSmell,
        }
    }

    fn write_script(&self, file: &str, line: u32, rule: &str, calls: &[ToolCall]) -> io::Result<()> {
        let warning = self.target(file, line, rule);
        let gateway = ScriptedGateway::from_responses(calls.iter().map(ToolCall::to_response));
        fs::write(self.script_for(&warning), gateway.to_jsonl())
    }
}

fn write_file(root: &Path, rel: &str, content: &str) -> io::Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)
}

fn write_lines(root: &Path, rel: &str, lines: &[String]) -> io::Result<()> {
    write_file(root, rel, &(lines.join("\n") + "\n"))
}

fn call(tool: ToolName, args: Value, thoughts: &str) -> ToolCall {
    ToolCall::new(tool, args, thoughts)
}

fn s(lines: &[&str]) -> Vec<String> {
    lines.iter().map(|l| l.to_string()).collect()
}

const S1104_DOC: &str = "Class variable fields should not have public accessibility

Public fields let any class read and change the state of an object, so the
class cannot enforce its invariants. Make the field private and expose it
through accessor methods, or declare it `static final` if it is a constant.

Noncompliant:

    public class Person {
        public String name;
    }

Compliant:

    public class Person {
        private String name;

        public String getName() { return name; }
    }
";

const S100_DOC: &str = "Method names should comply with a naming convention

Method names must match `^[a-z][a-zA-Z0-9]*$`.

Noncompliant:

    public int get_count() { ... }

Compliant:

    public int getCount() { ... }
";

const S1068_DOC: &str = "Unused \"private\" fields should be removed

A private field that is declared but never read or written is dead code.
Remove it.
";

const CHANGE_INFO_FIELDS: [(&str, &str); 30] = [
    ("String", "id"),
    ("String", "project"),
    ("String", "branch"),
    ("String", "topic"),
    ("String", "changeId"),
    ("String", "subject"),
    ("ChangeStatus", "status"),
    ("Timestamp", "created"),
    ("Timestamp", "updated"),
    ("Timestamp", "submitted"),
    ("AccountInfo", "submitter"),
    ("Boolean", "starred"),
    ("Collection<String>", "stars"),
    ("Boolean", "reviewed"),
    ("SubmitType", "submitType"),
    ("Boolean", "mergeable"),
    ("Boolean", "submittable"),
    ("Integer", "insertions"),
    ("Integer", "deletions"),
    ("Integer", "totalCommentCount"),
    ("Integer", "unresolvedCommentCount"),
    ("AccountInfo", "owner"),
    ("Map<String, ActionInfo>", "actions"),
    ("Map<String, LabelInfo>", "labels"),
    ("Map<String, Collection<String>>", "permittedLabels"),
    ("Collection<AccountInfo>", "removableReviewers"),
    ("Map<ReviewerState, Collection<AccountInfo>>", "reviewers"),
    ("Collection<ChangeMessageInfo>", "messages"),
    ("String", "currentRevision"),
    ("Map<String, RevisionInfo>", "revisions"),
];

/// ChangeInfo.java: 104 lines, `public int _number;` at line 82, the closing
/// brace of the class at line 104.
fn change_info() -> Vec<String> {
    let mut l = s(&[
        "package com.google.gerrit.extensions.common;",
        "",
        "import com.google.gerrit.extensions.client.ChangeStatus;",
        "import com.google.gerrit.extensions.client.ReviewerState;",
        "import com.google.gerrit.extensions.client.SubmitType;",
        "import com.google.gerrit.extensions.common.AccountInfo;",
        "import com.google.gerrit.extensions.common.ActionInfo;",
        "import com.google.gerrit.extensions.common.ChangeMessageInfo;",
        "import com.google.gerrit.extensions.common.LabelInfo;",
        "import com.google.gerrit.extensions.common.RevisionInfo;",
        "import java.sql.Timestamp;",
        "import java.util.Collection;",
        "import java.util.List;",
        "import java.util.Map;",
        "import java.util.Objects;",
        "",
        "/**",
        " * A change as returned by the REST API.",
        " */",
        "public class ChangeInfo {",
    ]);
    for (ty, name) in CHANGE_INFO_FIELDS {
        l.push(format!("    /** The {name} of the change. */"));
        l.push(format!("    public {ty} {name};"));
    }
    l.extend(s(&[
        "    /** Legacy numeric id of the change. */",
        "    public int _number;",
        "",
        "    /** Set on the last entry of a page when more results exist. */",
        "    public Boolean _moreChanges;",
        "",
        "    public String shortId() {",
        "        return changeId.substring(0, 9);",
        "    }",
        "",
        "    public boolean hasTopic() {",
        "        return topic != null;",
        "    }",
        "",
        "    @Override",
        "    public String toString() {",
        "        return project + \"~\" + branch + \"~\" + changeId;",
        "    }",
        "",
        "    public boolean sameProject(ChangeInfo other) {",
        "        return other != null",
        "            && Objects.equals(project, other.project);",
        "    }",
        "}",
    ]));
    debug_assert_eq!(l.len(), 104);
    debug_assert_eq!(l[81], "    public int _number;");
    l
}

/// Appends helper methods (four lines each) and then comment lines until the
/// file has `len` lines.
fn pad_methods(l: &mut Vec<String>, len: usize, body: impl Fn(usize) -> String) {
    let mut i = 1;
    while l.len() + 4 <= len {
        l.push(format!("    public String path{i}() {{"));
        l.push(format!("        return {};", body(i)));
        l.push("    }".into());
        l.push(String::new());
        i += 1;
    }
    while l.len() < len {
        l.push("    // Endpoint helpers above are generated.".into());
    }
}

/// ChangesRestClient.java with `return id(info._number);` at line 157.
fn changes_rest_client() -> Vec<String> {
    let mut l = s(&[
        "package com.urswolfer.gerrit.client.rest.http.changes;",
        "",
        "import com.google.gerrit.extensions.api.changes.ChangeApi;",
        "import com.google.gerrit.extensions.api.changes.Changes;",
        "import com.google.gerrit.extensions.common.ChangeInfo;",
        "import com.google.gerrit.extensions.restapi.RestApiException;",
        "",
        "public class ChangesRestClient extends Changes.NotImplemented implements Changes {",
        "    private final GerritRestClient gerritRestClient;",
        "",
        "    public ChangesRestClient(GerritRestClient gerritRestClient) {",
        "        this.gerritRestClient = gerritRestClient;",
        "    }",
        "",
    ]);
    pad_methods(&mut l, 154, |i| format!("gerritRestClient.url(\"/changes/?n={i}\")"));
    l.extend(s(&[
        "    @Override",
        "    public ChangeApi id(ChangeInfo info) throws RestApiException {",
        "        return id(info._number);",
        "    }",
        "",
        "    @Override",
        "    public ChangeApi id(int id) throws RestApiException {",
        "        return new ChangeApiRestClient(gerritRestClient, this, String.valueOf(id));",
        "    }",
        "}",
    ]));
    debug_assert_eq!(l[156], "        return id(info._number);");
    l
}

/// RealServerTest.java with the `_number` reads at lines 75 and 78.
fn real_server_test() -> Vec<String> {
    let mut l = s(&[
        "package com.urswolfer.gerrit.client.rest;",
        "",
        "import com.google.common.truth.Truth;",
        "import com.google.gerrit.extensions.api.GerritApi;",
        "import com.google.gerrit.extensions.common.ChangeInfo;",
        "import java.util.List;",
        "import org.junit.Test;",
        "",
        "public class RealServerTest {",
        "    private final GerritApi api = GerritApiFactory.forLocalServer();",
        "",
    ]);
    pad_methods(&mut l, 71, |i| format!("api.toString() + \"/{i}\""));
    l.extend(s(&[
        "    @Test",
        "    public void changeNumberRoundTrip() throws Exception {",
        "        List<ChangeInfo> changeInfoList = api.changes().query().get();",
        "        int changeNum = changeInfoList.get(0)._number;",
        "        ChangeInfo change = api.changes().id(changeNum).get();",
        "        Truth.assertThat(change.subject).isNotNull();",
        "        Truth.assertThat(change._number).isEqualTo(changeNum);",
        "    }",
        "}",
    ]));
    debug_assert_eq!(l[74], "        int changeNum = changeInfoList.get(0)._number;");
    debug_assert_eq!(l[77], "        Truth.assertThat(change._number).isEqualTo(changeNum);");
    l
}

/// The multi-file fix for the running example.
pub fn running_example_fix() -> Value {
    json!([
        {
            "file_name": CHANGE_INFO,
            "insertions": [
                {"line_number": 16, "new_lines": ["import com.google.gson.annotations.SerializedName;"]},
                {"line_number": 104, "new_lines": [
                    "",
                    "    @SerializedName(\"_number\")",
                    "    private int number;",
                    "    public int getNumber() { return number; }",
                    "    public void setNumber(int n) { this.number = n; }"
                ]}
            ],
            "deletions": [82]
        },
        {
            "file_name": CHANGES_REST_CLIENT,
            "insertions": [{"line_number": 157, "new_lines": ["        return id(info.getNumber());"]}],
            "deletions": [157]
        },
        {
            "file_name": REAL_SERVER_TEST,
            "insertions": [
                {"line_number": 75, "new_lines": ["        int changeNum = changeInfoList.get(0).getNumber();"]},
                {"line_number": 78, "new_lines": ["        Truth.assertThat(change.getNumber()).isEqualTo(changeNum);"]}
            ],
            "deletions": [75, 78]
        }
    ])
}

/// The naive variant of the running-example fix: accessors named after the
/// field, which breaks the method naming convention twice.
pub fn running_example_naive_fix() -> Value {
    json!([{
        "file_name": CHANGE_INFO,
        "insertions": [{"line_number": 104, "new_lines": [
            "    private int _number;",
            "    public int get_number() { return _number; }",
            "    public void set_number(int n) { this._number = n; }"
        ]}],
        "deletions": [82]
    },
    {
        "file_name": CHANGES_REST_CLIENT,
        "insertions": [{"line_number": 157, "new_lines": ["        return id(info.get_number());"]}],
        "deletions": [157]
    },
    {
        "file_name": REAL_SERVER_TEST,
        "insertions": [
            {"line_number": 75, "new_lines": ["        int changeNum = changeInfoList.get(0).get_number();"]},
            {"line_number": 78, "new_lines": ["        Truth.assertThat(change.get_number()).isEqualTo(changeNum);"]}
        ],
        "deletions": [75, 78]
    }])
}

fn running_example_answers() -> Value {
    json!({
        "answer_q1": "Yes, the rule violation is correctly raised: `_number` is a public, non-final instance field of ChangeInfo.",
        "answer_q2": "No, nothing suggests the public field is deliberate; other classes only read it.",
        "answer_q3": "Yes, the field can be made private behind a getter and setter, and the three reading sites updated."
    })
}

/// The public-field warning from the REST client project, with a
/// classification trajectory ending in a true-positive verdict and a
/// repair trajectory applying the multi-file fix.
pub fn running_example(base: &Path) -> io::Result<Fixture> {
    let f = Fixture::create(base, "running_example")?;
    write_lines(&f.root, CHANGE_INFO, &change_info())?;
    write_lines(&f.root, CHANGES_REST_CLIENT, &changes_rest_client())?;
    write_lines(&f.root, REAL_SERVER_TEST, &real_server_test())?;
    write_file(
        &f.root,
        ".harness/tests.txt",
        &format!(
            "ChangeInfoTest.numberIsSerialized\t{CHANGE_INFO}\t@SerializedName\\(\"_number\"\\)|public int _number;\t82\n\
             ChangesRestClientTest.idUsesNumber\t{CHANGES_REST_CLIENT}\treturn id\\(info\\.(_number|getNumber\\(\\))\\);\t157\n\
             RealServerTest.changeNumberRoundTrip\t{REAL_SERVER_TEST}\tisEqualTo\\(changeNum\\)\t78\n"
        ),
    )?;
    let calls = vec![
        call(
            ToolName::ReadDocumentation,
            json!({"rule_key": "java:S1104"}),
            "Start with what the rule asks for.",
        ),
        call(
            ToolName::ReadLines,
            json!({"file_path": CHANGE_INFO, "start_line": 70, "end_line": 90}),
            "Look at the flagged field and its neighbours.",
        ),
        call(
            ToolName::FindReferences,
            json!({"symbol": "_number"}),
            "Who reads or writes the field?",
        ),
        call(
            ToolName::ReadLines,
            json!({"file_path": CHANGES_REST_CLIENT, "start_line": 150, "end_line": 160}),
            "Check how the REST client uses it.",
        ),
        call(
            ToolName::FindDefinition,
            json!({"symbol": "ChangeInfo"}),
            "Confirm where the class is declared.",
        ),
        call(
            ToolName::SearchPatterns,
            json!({"pattern": "@(Value|Getter|Setter|Data)\\b"}),
            "Rule out generated accessors.",
        ),
        call(
            ToolName::AnswerClassificationQuestions,
            json!({"answer_q1": running_example_answers()["answer_q1"]}),
            "Q1 first.",
        ),
        call(
            ToolName::AnswerClassificationQuestions,
            json!({"answer_q2": running_example_answers()["answer_q2"]}),
            "Now Q2.",
        ),
        call(
            ToolName::AnswerClassificationQuestions,
            json!({"answer_q3": running_example_answers()["answer_q3"]}),
            "And Q3.",
        ),
        call(
            ToolName::GiveFinalVerdict,
            json!({"verdict": "true_positive", "rationale": "The field is public without reason and can be encapsulated."}),
            "All three answers point the same way.",
        ),
        call(
            ToolName::FormulatePlan,
            json!({"plan": "1. Replace the public field with a private `number` kept under its JSON name.\n2. Add getNumber/setNumber.\n3. Update the two readers."}),
            "Plan before editing.",
        ),
        call(
            ToolName::FindReferences,
            json!({"symbol": "_number"}),
            "Collect every site to update.",
        ),
        call(
            ToolName::WriteFix,
            json!({"fix": running_example_fix()}),
            "Apply the change across the three files.",
        ),
        call(ToolName::GoalsAccomplished, json!({}), "The fix was approved."),
    ];
    f.write_script(CHANGE_INFO, 82, "java:S1104", &calls)?;
    Ok(f)
}

pub const LOMBOK_SUPPRESSED_LINE: &str = "    private final String enchantName; //NOSONAR";

/// An unused-private-field warning on a Lombok class whose generated getter
/// reads the field, scripted to a false-positive verdict and an inline
/// suppression.
pub fn lombok_false_positive(base: &Path) -> io::Result<Fixture> {
    let f = Fixture::create(base, "lombok_false_positive")?;
    write_lines(
        &f.root,
        ENCHANTMENT_WRAPPER,
        &s(&[
            "package dev.enchant;",
            "",
            "import lombok.Getter;",
            "import lombok.RequiredArgsConstructor;",
            "",
            "@Getter",
            "@RequiredArgsConstructor",
            "public class EnchantmentWrapper {",
            "    private final String enchantName;",
            "    private final int level;",
            "",
            "    public boolean isMaxLevel() {",
            "        return level >= 5;",
            "    }",
            "}",
        ]),
    )?;
    write_lines(
        &f.root,
        ENCHANT_COMMAND,
        &s(&[
            "package dev.enchant;",
            "",
            "public class EnchantCommand {",
            "    public String describe(EnchantmentWrapper wrapper) {",
            "        return wrapper.getEnchantName() + \" \" + wrapper.getLevel();",
            "    }",
            "}",
        ]),
    )?;
    write_file(
        &f.root,
        ".harness/tests.txt",
        &format!("EnchantCommandTest.describe\t{ENCHANT_COMMAND}\tgetEnchantName\\(\\)\t5\n"),
    )?;
    let calls = vec![
        call(
            ToolName::ReadDocumentation,
            json!({"rule_key": "java:S1068"}),
            "What does the rule consider unused?",
        ),
        call(
            ToolName::ReadLines,
            json!({"file_path": ENCHANTMENT_WRAPPER, "start_line": 1, "end_line": 15}),
            "Read the whole class.",
        ),
        call(
            ToolName::SearchPatterns,
            json!({"pattern": "getEnchantName"}),
            "The class has @Getter; is the getter used?",
        ),
        call(
            ToolName::AnswerClassificationQuestions,
            json!({
                "answer_q1": "No, the field is read through the getter Lombok generates for it.",
                "answer_q2": "Yes, the field exists to back the generated getEnchantName().",
                "answer_q3": "No, removing the field breaks EnchantCommand, which calls getEnchantName()."
            }),
            "Answer all three at once.",
        ),
        call(
            ToolName::GiveFinalVerdict,
            json!({
                "verdict": "false_positive",
                "rationale": "Lombok's @Getter generates getEnchantName(), which EnchantCommand calls, so the field is used."
            }),
            "The analyzer does not see generated code.",
        ),
        call(
            ToolName::ReadLines,
            json!({"file_path": ENCHANTMENT_WRAPPER, "start_line": 9, "end_line": 9}),
            "Check the exact text of the flagged line.",
        ),
        call(
            ToolName::WriteFix,
            json!({"fix": [{
                "file_name": ENCHANTMENT_WRAPPER,
                "insertions": [{"line_number": 9, "new_lines": [LOMBOK_SUPPRESSED_LINE]}],
                "deletions": [9]
            }]}),
            "Mark the line with the inline marker.",
        ),
        call(ToolName::GoalsAccomplished, json!({}), "Suppressed."),
    ];
    f.write_script(ENCHANTMENT_WRAPPER, 9, "java:S1068", &calls)?;
    Ok(f)
}

/// Which check the scripted fix of an ablation fixture slips past.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flaw {
    BreaksBuild,
    AddsWarnings,
    BreaksTests,
    None,
}

pub struct AblationCase {
    pub class: &'static str,
    pub flaw: Flaw,
}

pub const ABLATION_CASES: [AblationCase; 4] = [
    AblationCase {
        class: "Counter",
        flaw: Flaw::BreaksBuild,
    },
    AblationCase {
        class: "Limits",
        flaw: Flaw::AddsWarnings,
    },
    AblationCase {
        class: "Settings",
        flaw: Flaw::BreaksTests,
    },
    AblationCase {
        class: "Point",
        flaw: Flaw::None,
    },
];

pub fn ablation_file(class: &str) -> String {
    format!("src/main/java/demo/{class}.java")
}

fn ablation_source(case: &AblationCase) -> (Vec<String>, Value) {
    let file = ablation_file(case.class);
    let (field_line, field, body) = match case.flaw {
        Flaw::BreaksBuild => ("    public int count;", "count", "        return count + 1;"),
        Flaw::AddsWarnings => ("    public int max;", "max", "        return max * 2;"),
        Flaw::BreaksTests => ("    public String mode = \"safe\";", "mode", "        return mode.toUpperCase();"),
        Flaw::None => ("    public int x;", "x", "        return x * x;"),
    };
    let class = case.class;
    let lines = vec![
        "package demo;".to_string(),
        String::new(),
        format!("public class {class} {{"),
        field_line.to_string(),
        String::new(),
        "    public Object describe() {".to_string(),
        body.to_string(),
        "    }".to_string(),
        "}".to_string(),
    ];
    let private = field_line.replacen("public", "private", 1);
    let cap = field[..1].to_uppercase() + &field[1..];
    let new_lines: Vec<String> = match case.flaw {
        Flaw::BreaksBuild => vec![private, format!("    public int get{cap}() {{ return {field}; }}"), "    }".into()],
        Flaw::AddsWarnings => vec![private, format!("    public int get_{field}() {{ return {field}; }}")],
        Flaw::BreaksTests => vec![
            "    private String mode = \"fast\";".into(),
            format!("    public String get{cap}() {{ return {field}; }}"),
        ],
        Flaw::None => vec![private, format!("    public int get{cap}() {{ return {field}; }}")],
    };
    let fix = json!([{
        "file_name": file,
        "insertions": [{"line_number": 4, "new_lines": new_lines}],
        "deletions": [4]
    }]);
    (lines, fix)
}

/// The scripted fix for one ablation case.
pub fn ablation_fix(case: &AblationCase) -> Value {
    ablation_source(case).1
}

/// Four classes with one public field each. The scripted fix for each one is
/// flawed in a way only one check catches: the build, the warning diff or
/// the tests; the last fix is clean.
pub fn ablation_suite(base: &Path) -> io::Result<Fixture> {
    let f = Fixture::create(base, "ablation_suite")?;
    let mut tests = String::new();
    for case in &ABLATION_CASES {
        let file = ablation_file(case.class);
        let (lines, fix) = ablation_source(case);
        write_lines(&f.root, &file, &lines)?;
        tests.push_str(&format!("{}Test.describe\t{file}\tdescribe\\(\\)\t6\n", case.class));
        let mut calls = vec![
            call(
                ToolName::ReadLines,
                json!({"file_path": file, "start_line": 1, "end_line": 9}),
                "Read the class.",
            ),
            call(
                ToolName::AnswerClassificationQuestions,
                json!({
                    "answer_q1": "Yes, the field is public and mutable.",
                    "answer_q2": "No, nothing marks the exposure as intended.",
                    "answer_q3": "Yes, an accessor can replace direct access."
                }),
                "Answer the questions.",
            ),
            call(
                ToolName::GiveFinalVerdict,
                json!({"verdict": "true_positive", "rationale": "A public mutable field with a simple encapsulating fix."}),
                "Fix it.",
            ),
            call(
                ToolName::FormulatePlan,
                json!({"plan": "Make the field private and add a getter."}),
                "Plan.",
            ),
            call(ToolName::WriteFix, json!({"fix": fix}), "Encapsulate the field."),
            call(ToolName::GoalsAccomplished, json!({}), "Done if approved."),
        ];
        let idle = call(
            ToolName::ReadLines,
            json!({"file_path": file, "start_line": 1, "end_line": 9}),
            "Re-read the class.",
        );
        calls.extend(std::iter::repeat_n(idle, 40 - 3));
        f.write_script(&file, 4, "java:S1104", &calls)?;
    }
    tests.push_str("SettingsTest.defaultModeIsSafe\tsrc/main/java/demo/Settings.java\tmode = \"safe\"\t4\n");
    write_file(&f.root, ".harness/tests.txt", &tests)?;
    Ok(f)
}

pub const BATCH_CLASSES: [&str; 5] = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon"];

pub fn batch_file(class: &str) -> String {
    format!("src/main/java/batch/{class}.java")
}

/// Five public-field warnings: three scripted to approved fixes, one to an
/// approved suppression and one (Epsilon) to a fix that never passes.
pub fn batch_corpus(base: &Path) -> io::Result<Fixture> {
    let f = Fixture::create(base, "batch_corpus")?;
    let mut tests = String::new();
    for class in BATCH_CLASSES {
        let file = batch_file(class);
        write_lines(
            &f.root,
            &file,
            &[
                "package batch;".to_string(),
                String::new(),
                format!("public class {class} {{"),
                "    public int value;".to_string(),
                String::new(),
                "    public int total() {".to_string(),
                "        return value + 1;".to_string(),
                "    }".to_string(),
                "}".to_string(),
            ],
        )?;
        tests.push_str(&format!("{class}Test.total\t{file}\treturn (value|getValue\\(\\)) \\+ 1;\t7\n"));
        let read = call(
            ToolName::ReadLines,
            json!({"file_path": file, "start_line": 1, "end_line": 9}),
            "Read the class.",
        );
        let fp = class == "Delta";
        let verdict = if fp { "false_positive" } else { "true_positive" };
        let mut calls = vec![
            read.clone(),
            call(
                ToolName::AnswerClassificationQuestions,
                json!({
                    "answer_q1": if fp { "No, the field is a deliberate data-transfer slot." } else { "Yes, the field is public and mutable." },
                    "answer_q2": if fp { "Yes, the class is a plain record by design." } else { "No, nothing marks the exposure as intended." },
                    "answer_q3": if fp { "No, callers rely on direct field access." } else { "Yes, a getter can replace direct access." }
                }),
                "Answer the questions.",
            ),
            call(
                ToolName::GiveFinalVerdict,
                json!({"verdict": verdict, "rationale": format!("{class} was judged by its usage.")}),
                "Decide.",
            ),
        ];
        let fix = match class {
            "Delta" => json!([{
                "file_name": file,
                "insertions": [{"line_number": 4, "new_lines": ["    public int value; //NOSONAR"]}],
                "deletions": [4]
            }]),
            "Epsilon" => json!([{
                "file_name": file,
                "insertions": [{"line_number": 4, "new_lines": ["    private int value;"]}],
                "deletions": [4, 7]
            }]),
            _ => json!([{
                "file_name": file,
                "insertions": [
                    {"line_number": 4, "new_lines": ["    private int value;", "", "    public int getValue() { return value; }"]},
                    {"line_number": 7, "new_lines": ["        return getValue() + 1;"]}
                ],
                "deletions": [4, 7]
            }]),
        };
        calls.push(call(ToolName::WriteFix, json!({"fix": fix}), "Apply the change."));
        calls.push(call(ToolName::GoalsAccomplished, json!({}), "Done if approved."));
        calls.extend(std::iter::repeat_n(read, 40 - 2));
        f.write_script(&file, 4, "java:S1104", &calls)?;
    }
    write_file(&f.root, ".harness/tests.txt", &tests)?;
    Ok(f)
}

/// A project seeded with exactly three reference-rule violations: a long
/// line, trailing whitespace and a tab.
pub fn seeded_corpus(base: &Path) -> io::Result<Fixture> {
    let f = Fixture::create(base, "seeded_corpus")?;
    let long = format!("    private static final String BANNER = \"{}\";", "=".repeat(100));
    write_lines(
        &f.root,
        "src/main/java/seeded/Banner.java",
        &[
            "package seeded;".to_string(),
            String::new(),
            "public class Banner {".to_string(),
            long,
            String::new(),
            "    public String text() {   ".to_string(),
            "\treturn BANNER;".to_string(),
            "    }".to_string(),
            "}".to_string(),
        ],
    )?;
    write_file(&f.root, ".harness/tests.txt", "")?;
    Ok(f)
}
