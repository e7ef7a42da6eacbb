//! The target checkout: pristine snapshots, rollback, and the build and test
//! commands whose output is turned into agent feedback.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use similar::TextDiff;
use thiserror::Error;
use wait_timeout::ChildExt;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot restore `{path}`: {source}")]
    Restore {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
}

/// Failures of the environment rather than of the code under test.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfraError {
    #[error("command not found while running `{command}`: {stderr}")]
    CommandNotFound { command: String, stderr: String },
    #[error("could not start `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("`{command}` timed out after {seconds}s")]
    Timeout {
        command: String,
        seconds: u64,
        partial_output: String,
    },
    #[error("no command configured for {0}")]
    NotConfigured(&'static str),
}

/// Which output stream carries compiler diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticStream {
    #[default]
    Stderr,
    Stdout,
    Both,
}

/// Per-project commands and the regular expressions used to read their output.
///
/// `diagnostic_pattern` needs named groups `file` and `line` (and optionally
/// `message`); `failure_pattern` needs `test` (optionally `message`);
/// `frame_pattern` needs `file`; `tests_run_pattern`, when set, needs `count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectProfile {
    pub build_command: String,
    pub test_command: String,
    pub build_timeout_secs: u64,
    pub test_timeout_secs: u64,
    pub diagnostic_pattern: String,
    pub diagnostic_stream: DiagnosticStream,
    pub failure_pattern: String,
    pub frame_pattern: String,
    pub tests_run_pattern: Option<String>,
    pub source_extensions: Vec<String>,
}

impl Default for ProjectProfile {
    fn default() -> Self {
        ProjectProfile {
            build_command: "python3 -B {project_root}/.harness/build.py {project_root}".into(),
            test_command: "python3 -B {project_root}/.harness/test.py {project_root}".into(),
            build_timeout_secs: 300,
            test_timeout_secs: 600,
            diagnostic_pattern: r"^(?P<file>[^\s:]+):(?P<line>\d+): error: (?P<message>.*)$".into(),
            diagnostic_stream: DiagnosticStream::Stderr,
            failure_pattern: r"^FAIL: (?P<test>\S+) - (?P<message>.*)$".into(),
            frame_pattern: r"^\s+at (?:[\w$.<>]+\()?(?P<file>[^\s():]+):(?P<line>\d+)\)?\s*$".into(),
            tests_run_pattern: Some(r"^Ran (?P<count>\d+) tests?".into()),
            source_extensions: default_source_extensions(),
        }
    }
}

pub fn default_source_extensions() -> Vec<String> {
    [
        "java", "kt", "scala", "groovy", "rs", "py", "js", "jsx", "ts", "tsx", "c", "h", "cc", "cpp", "hpp", "cs", "go", "rb", "php",
        "swift", "m",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileSnapshot {
    pub hash: String,
    pub content: Vec<u8>,
}

/// Handle on a project checkout. Files are snapshotted before they are first
/// modified so that rollback restores their exact bytes.
#[derive(Debug, Clone)]
pub struct ProjectHandle {
    root: PathBuf,
    profile: ProjectProfile,
    pristine: BTreeMap<String, FileSnapshot>,
}

impl ProjectHandle {
    pub fn new(root: impl Into<PathBuf>, profile: ProjectProfile) -> ProjectHandle {
        ProjectHandle {
            root: root.into(),
            profile,
            pristine: BTreeMap::new(),
        }
    }

    /// Creates a handle with the given files already captured.
    pub fn snapshot(root: impl Into<PathBuf>, files: &[String], profile: ProjectProfile) -> Result<ProjectHandle, WorkspaceError> {
        let mut handle = ProjectHandle::new(root, profile);
        handle.track(files)?;
        Ok(handle)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn profile(&self) -> &ProjectProfile {
        &self.profile
    }

    /// Captures files not captured yet. Already-tracked files keep their
    /// original snapshot.
    pub fn track(&mut self, files: &[String]) -> Result<(), WorkspaceError> {
        for f in files {
            if self.pristine.contains_key(f) {
                continue;
            }
            let path = self.root.join(f);
            let content = fs::read(&path).map_err(|source| WorkspaceError::Read {
                path: path.clone(),
                source,
            })?;
            let hash = hex::encode(Sha256::digest(&content));
            self.pristine.insert(f.clone(), FileSnapshot { hash, content });
        }
        Ok(())
    }

    pub fn tracked_files(&self) -> impl Iterator<Item = &str> {
        self.pristine.keys().map(String::as_str)
    }

    pub fn pristine_content(&self, file: &str) -> Option<&[u8]> {
        self.pristine.get(file).map(|s| s.content.as_slice())
    }

    /// Tracked files whose current bytes differ from the snapshot.
    pub fn modified_files(&self) -> Vec<String> {
        self.pristine
            .iter()
            .filter(|(f, snap)| fs::read(self.root.join(f)).map(|c| c != snap.content).unwrap_or(true))
            .map(|(f, _)| f.clone())
            .collect()
    }

    pub fn is_pristine(&self) -> bool {
        self.modified_files().is_empty()
    }

    /// Restores every tracked file to its snapshot.
    pub fn rollback(&self) -> Result<(), WorkspaceError> {
        let all: Vec<String> = self.pristine.keys().cloned().collect();
        self.restore_files(&all)
    }

    pub fn restore_files(&self, files: &[String]) -> Result<(), WorkspaceError> {
        for f in files {
            let Some(snap) = self.pristine.get(f) else { continue };
            let path = self.root.join(f);
            let current = fs::read(&path).ok();
            if current.as_deref() != Some(snap.content.as_slice()) {
                fs::write(&path, &snap.content).map_err(|source| WorkspaceError::Restore { path, source })?;
            }
        }
        Ok(())
    }

    /// Makes the current contents the new baseline (used when a fix is kept).
    pub fn commit(&mut self) -> Result<(), WorkspaceError> {
        let files: Vec<String> = self.pristine.keys().cloned().collect();
        self.pristine.clear();
        let existing: Vec<String> = files.into_iter().filter(|f| self.root.join(f).is_file()).collect();
        self.track(&existing)
    }

    /// Unified diff of every modified tracked file against its snapshot.
    pub fn diff_against_pristine(&self, context: usize) -> String {
        let mut out = String::new();
        for f in self.modified_files() {
            let old = String::from_utf8_lossy(&self.pristine[&f].content).into_owned();
            let new = fs::read(self.root.join(&f))
                .map(|c| String::from_utf8_lossy(&c).into_owned())
                .unwrap_or_default();
            out.push_str(
                &TextDiff::from_lines(&old, &new)
                    .unified_diff()
                    .context_radius(context)
                    .header(&format!("a/{f}"), &format!("b/{f}"))
                    .to_string(),
            );
        }
        out
    }

    pub fn run_build(&self) -> Result<BuildFeedback, InfraError> {
        if self.profile.build_command.trim().is_empty() {
            return Err(InfraError::NotConfigured("build"));
        }
        let output = run_command(
            &self.profile.build_command,
            &self.root,
            Duration::from_secs(self.profile.build_timeout_secs),
        )?;
        if output.success() {
            return Ok(BuildFeedback::default_success());
        }
        let stream = match self.profile.diagnostic_stream {
            DiagnosticStream::Stderr => output.stderr.clone(),
            DiagnosticStream::Stdout => output.stdout.clone(),
            DiagnosticStream::Both => format!("{}\n{}", output.stdout, output.stderr),
        };
        let pattern = compile(&self.profile.diagnostic_pattern);
        let mut errors = Vec::new();
        if let Some(re) = pattern {
            for line in stream.lines() {
                let Some(caps) = re.captures(line) else { continue };
                let (Some(file), Some(num)) = (caps.name("file"), caps.name("line")) else {
                    continue;
                };
                let Ok(line_number) = num.as_str().parse::<u32>() else { continue };
                let file_path = file.as_str().to_string();
                let message = caps.name("message").map(|m| m.as_str().trim().to_string()).unwrap_or_default();
                let source_line = self.current_line(&file_path, line_number).unwrap_or_default();
                let diff_view = self.diff_view(&file_path, line_number);
                errors.push(BuildError {
                    file_path,
                    line_number,
                    message,
                    source_line,
                    diff_view,
                });
            }
        }
        let unparsed_tail = if errors.is_empty() { Some(tail(&stream, 20)) } else { None };
        Ok(BuildFeedback {
            success: false,
            errors,
            unparsed_tail,
        })
    }

    pub fn run_tests(&self) -> Result<TestFeedback, InfraError> {
        if self.profile.test_command.trim().is_empty() {
            return Err(InfraError::NotConfigured("tests"));
        }
        let output = run_command(
            &self.profile.test_command,
            &self.root,
            Duration::from_secs(self.profile.test_timeout_secs),
        )?;
        let combined = format!("{}\n{}", output.stdout, output.stderr);
        let tests_run = self.profile.tests_run_pattern.as_deref().and_then(compile).and_then(|re| {
            combined
                .lines()
                .find_map(|l| re.captures(l).and_then(|c| c.name("count")?.as_str().parse::<u32>().ok()))
        });
        if output.success() {
            if tests_run == Some(0) {
                tracing::info!(root = %self.root.display(), "test command discovered no tests");
            }
            return Ok(TestFeedback {
                success: true,
                failures: Vec::new(),
                tests_run,
            });
        }
        let mut failures = parse_failures(&combined, &self.profile, &self.root);
        if failures.is_empty() {
            failures.push(TestFailure {
                test_id: "<unidentified>".into(),
                message: format!("test command exited with status {:?}", output.status),
                cleaned_trace: tail(&combined, 20),
            });
        }
        Ok(TestFeedback {
            success: false,
            failures,
            tests_run,
        })
    }

    fn resolve(&self, file: &str) -> PathBuf {
        let p = Path::new(file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn current_line(&self, file: &str, line: u32) -> Option<String> {
        let content = fs::read(self.resolve(file)).ok()?;
        let content = String::from_utf8_lossy(&content);
        content
            .split('\n')
            .nth(line.checked_sub(1)? as usize)
            .map(|l| l.trim_end_matches('\r').to_string())
    }

    /// Unified diff (two lines of context) between the pristine and current
    /// file, limited to the hunk containing `line`, or the nearest hunk when
    /// the error sits outside every changed region.
    fn diff_view(&self, file: &str, line: u32) -> String {
        let rel = match Path::new(file).strip_prefix(&self.root) {
            Ok(r) => r.to_string_lossy().into_owned(),
            Err(_) => file.to_string(),
        };
        let Some(old) = self.pristine.get(&rel) else { return String::new() };
        let old = String::from_utf8_lossy(&old.content).into_owned();
        let new = fs::read(self.resolve(file))
            .map(|c| String::from_utf8_lossy(&c).into_owned())
            .unwrap_or_default();
        let diff = TextDiff::from_lines(&old, &new);
        let unified = diff.unified_diff();
        let mut unified = unified;
        let unified = unified.context_radius(2);
        let mut best: Option<(u32, String)> = None;
        for hunk in unified.iter_hunks() {
            let ops = hunk.ops();
            let (Some(first), Some(last)) = (ops.first(), ops.last()) else {
                continue;
            };
            let start = first.new_range().start as u32 + 1;
            let end = (last.new_range().end as u32).max(start);
            let distance = start.saturating_sub(line).max(line.saturating_sub(end));
            if best.as_ref().is_none_or(|(d, _)| distance < *d) {
                best = Some((distance, hunk.to_string()));
            }
        }
        best.map(|(_, h)| h).unwrap_or_default()
    }
}

fn tail(text: &str, lines: usize) -> String {
    let all: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}

fn compile(pattern: &str) -> Option<Regex> {
    match Regex::new(pattern) {
        Ok(re) => Some(re),
        Err(e) => {
            tracing::warn!(pattern, error = %e, "ignoring invalid output pattern");
            None
        }
    }
}

pub fn validate_pattern(pattern: &str) -> Result<(), WorkspaceError> {
    Regex::new(pattern).map(|_| ()).map_err(|e| WorkspaceError::Pattern {
        pattern: pattern.to_string(),
        message: e.to_string(),
    })
}

fn parse_failures(output: &str, profile: &ProjectProfile, root: &Path) -> Vec<TestFailure> {
    let (Some(failure_re), frame_re) = (compile(&profile.failure_pattern), compile(&profile.frame_pattern)) else {
        return Vec::new();
    };
    let names = ProjectFileNames::new(root);
    let mut failures: Vec<TestFailure> = Vec::new();
    let mut in_block = false;
    for line in output.lines() {
        if let Some(caps) = failure_re.captures(line) {
            failures.push(TestFailure {
                test_id: caps.name("test").map(|m| m.as_str().to_string()).unwrap_or_default(),
                message: caps.name("message").map(|m| m.as_str().trim().to_string()).unwrap_or_default(),
                cleaned_trace: String::new(),
            });
            in_block = true;
            continue;
        }
        if !in_block {
            continue;
        }
        let current = failures.last_mut().expect("inside a failure block");
        if let Some(caps) = frame_re.as_ref().and_then(|re| re.captures(line)) {
            let file = caps.name("file").map(|m| m.as_str()).unwrap_or_default();
            if names.contains(file) {
                push_line(&mut current.cleaned_trace, line);
            }
        } else if line.starts_with(char::is_whitespace) && !line.trim().is_empty() {
            push_line(&mut current.cleaned_trace, line);
        } else {
            in_block = false;
        }
    }
    failures
}

fn push_line(buf: &mut String, line: &str) {
    if !buf.is_empty() {
        buf.push('\n');
    }
    buf.push_str(line);
}

/// Decides whether a stack-frame file reference lies inside the project.
struct ProjectFileNames {
    root: PathBuf,
    canonical_root: Option<PathBuf>,
    basenames: OnceLock<BTreeSet<String>>,
}

impl ProjectFileNames {
    fn new(root: &Path) -> Self {
        ProjectFileNames {
            root: root.to_path_buf(),
            canonical_root: root.canonicalize().ok(),
            basenames: OnceLock::new(),
        }
    }

    fn contains(&self, file: &str) -> bool {
        let p = Path::new(file);
        if p.is_absolute() {
            let canon = p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
            return canon.starts_with(&self.root) || self.canonical_root.as_ref().is_some_and(|r| canon.starts_with(r));
        }
        if p.components().count() > 1 {
            return self.root.join(p).is_file();
        }
        self.root.join(p).is_file()
            || self
                .basenames
                .get_or_init(|| {
                    WalkDir::new(&self.root)
                        .into_iter()
                        .filter_entry(|e| e.depth() == 0 || !is_hidden(e.file_name()))
                        .filter_map(Result::ok)
                        .filter(|e| e.file_type().is_file())
                        .map(|e| e.file_name().to_string_lossy().into_owned())
                        .collect()
                })
                .contains(file)
    }
}

fn is_hidden(name: &std::ffi::OsStr) -> bool {
    name.to_string_lossy().starts_with('.')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildError {
    pub file_path: String,
    pub line_number: u32,
    pub message: String,
    pub source_line: String,
    pub diff_view: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildFeedback {
    pub success: bool,
    pub errors: Vec<BuildError>,
    /// Last lines of the diagnostic stream when no error could be extracted.
    pub unparsed_tail: Option<String>,
}

impl BuildFeedback {
    fn default_success() -> Self {
        BuildFeedback {
            success: true,
            errors: Vec::new(),
            unparsed_tail: None,
        }
    }

    pub fn render(&self) -> String {
        if self.success {
            return "The project builds successfully.".into();
        }
        let mut out = String::from("The project does not build.\n");
        for (i, e) in self.errors.iter().enumerate() {
            out.push_str(&format!("Error {}: {}:{}: {}\n", i + 1, e.file_path, e.line_number, e.message));
            out.push_str(&format!("  Code line: {}\n", e.source_line.trim()));
            if !e.diff_view.is_empty() {
                out.push_str("  Diff against the original code:\n");
                for l in e.diff_view.lines() {
                    out.push_str("    ");
                    out.push_str(l);
                    out.push('\n');
                }
            }
        }
        if let Some(tail) = &self.unparsed_tail {
            out.push_str("No compiler error could be located; last lines of the build output:\n");
            out.push_str(tail);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFailure {
    pub test_id: String,
    pub message: String,
    pub cleaned_trace: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFeedback {
    pub success: bool,
    pub failures: Vec<TestFailure>,
    pub tests_run: Option<u32>,
}

impl TestFeedback {
    pub fn render(&self) -> String {
        if self.success {
            return "All tests pass.".into();
        }
        let mut out = format!("{} test(s) failed.\n", self.failures.len());
        for f in &self.failures {
            out.push_str(&format!("Test {}: {}\n", f.test_id, f.message));
            if !f.cleaned_trace.is_empty() {
                out.push_str(&f.cleaned_trace);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

impl CommandOutput {
    pub fn success(&self) -> bool {
        self.status == Some(0)
    }
}

fn shell_quote(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "/._-+=:,@".contains(c)) {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

/// Substitutes `{name}` placeholders with shell-quoted values.
pub fn render_template(template: &str, vars: &[(&str, &Path)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), &shell_quote(&value.to_string_lossy()));
    }
    out
}

/// Runs a command template through `sh -c` in `root`, with `{project_root}`
/// substituted by its absolute form. Exit status 127 is reported as a missing command.
pub fn run_command(template: &str, root: &Path, timeout: Duration) -> Result<CommandOutput, InfraError> {
    let absolute = std::path::absolute(root).unwrap_or_else(|_| root.to_path_buf());
    let command = render_template(template, &[("project_root", &absolute)]);
    run_shell(&command, &absolute, timeout)
}

pub fn run_shell(command: &str, cwd: &Path, timeout: Duration) -> Result<CommandOutput, InfraError> {
    use std::os::unix::process::CommandExt;

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| InfraError::Spawn {
            command: command.to_string(),
            message: e.to_string(),
        })?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });
    let status = child.wait_timeout(timeout).map_err(|e| InfraError::Spawn {
        command: command.to_string(),
        message: e.to_string(),
    })?;
    let Some(status) = status else {
        // Kill the whole process group so that grandchildren release the pipes.
        // SAFETY: plain syscall; the group id is the child's pid because of process_group(0).
        unsafe {
            libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
        }
        let _ = child.kill();
        let _ = child.wait();
        let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
        return Err(InfraError::Timeout {
            command: command.to_string(),
            seconds: timeout.as_secs(),
            partial_output: format!("{stdout}{stderr}"),
        });
    };
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    if status.code() == Some(127) {
        return Err(InfraError::CommandNotFound {
            command: command.to_string(),
            stderr: stderr.trim().to_string(),
        });
    }
    Ok(CommandOutput {
        status: status.code(),
        stdout,
        stderr,
    })
}

/// Relative paths of the project's source files, sorted. Hidden files and
/// directories are skipped.
pub fn source_files(root: &Path, extensions: &[String]) -> Vec<String> {
    let mut files: Vec<String> = WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !is_hidden(e.file_name()))
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter(|e| {
            e.path()
                .extension()
                .map(|x| extensions.iter().any(|ext| ext.as_str() == x.to_string_lossy()))
                .unwrap_or(false)
        })
        .filter_map(|e| e.path().strip_prefix(root).ok().map(|p| p.to_string_lossy().replace('\\', "/")))
        .collect();
    files.sort();
    files
}

/// Hash over every file below `root` (paths and bytes), independent of
/// directory iteration order.
pub fn tree_hash(root: &Path) -> String {
    let mut entries: Vec<(String, PathBuf)> = WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            let rel = e.path().strip_prefix(root).ok()?.to_string_lossy().into_owned();
            Some((rel, e.path().to_path_buf()))
        })
        .collect();
    entries.sort();
    let mut hasher = Sha256::new();
    for (rel, path) in entries {
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        let content = fs::read(&path).unwrap_or_default();
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(&content);
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn project(files: &[(&str, &str)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for (name, content) in files {
            let path = dir.path().join(name);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, content).unwrap();
        }
        dir
    }

    fn profile(build: &str, test: &str) -> ProjectProfile {
        ProjectProfile {
            build_command: build.into(),
            test_command: test.into(),
            ..ProjectProfile::default()
        }
    }

    #[test]
    fn snapshot_rollback_identity_and_restore() {
        let dir = project(&[("a.txt", "one\n"), ("b/c.txt", "two\r\n")]);
        let files = vec!["a.txt".to_string(), "b/c.txt".to_string()];
        let before = tree_hash(dir.path());
        let handle = ProjectHandle::snapshot(dir.path(), &files, ProjectProfile::default()).unwrap();
        handle.rollback().unwrap();
        assert_eq!(tree_hash(dir.path()), before);

        fs::write(dir.path().join("b/c.txt"), "changed").unwrap();
        assert_eq!(handle.modified_files(), vec!["b/c.txt".to_string()]);
        handle.rollback().unwrap();
        assert_eq!(fs::read(dir.path().join("b/c.txt")).unwrap(), b"two\r\n");
        assert_eq!(tree_hash(dir.path()), before);
    }

    #[test]
    fn snapshot_of_missing_file_fails() {
        let dir = project(&[]);
        let err = ProjectHandle::snapshot(dir.path(), &["nope.java".to_string()], ProjectProfile::default()).unwrap_err();
        assert!(matches!(err, WorkspaceError::Read { .. }));
    }

    #[test]
    fn clean_build_has_no_errors() {
        let dir = project(&[]);
        let handle = ProjectHandle::new(dir.path(), profile("echo compiling; exit 0", "true"));
        let fb = handle.run_build().unwrap();
        assert!(fb.success);
        assert!(fb.errors.is_empty());
    }

    #[test]
    fn build_errors_are_extracted_from_stderr_only() {
        let dir = project(&[("src/A.java", "class A {\n}\n}\n")]);
        let mut handle = ProjectHandle::new(
            dir.path(),
            profile(
                "echo 'src/Noise.java:1: error: stdout is ignored'; echo 'src/A.java:3: error: class, interface, enum, or record expected' >&2; exit 1",
                "true",
            ),
        );
        handle.track(&["src/A.java".to_string()]).unwrap();
        let fb = handle.run_build().unwrap();
        assert!(!fb.success);
        assert_eq!(fb.errors.len(), 1);
        assert_eq!(fb.errors[0].file_path, "src/A.java");
        assert_eq!(fb.errors[0].line_number, 3);
        assert_eq!(fb.errors[0].source_line, "}");
        assert!(fb.render().contains("src/A.java:3"));
    }

    #[test]
    fn diff_view_shows_hunk_around_error() {
        let original: String = (1..=30).map(|i| format!("l{i}\n")).collect();
        let dir = project(&[("F.java", &original)]);
        let mut handle = ProjectHandle::new(dir.path(), profile("echo 'F.java:16: error: boom' >&2; exit 1", "true"));
        handle.track(&["F.java".to_string()]).unwrap();
        let modified = original.replace("l15\n", "l15\n}\n");
        fs::write(dir.path().join("F.java"), modified).unwrap();
        let fb = handle.run_build().unwrap();
        let view = &fb.errors[0].diff_view;
        assert!(view.contains("+}"), "{view}");
        assert!(view.contains(" l14") && view.contains(" l16"), "{view}");
        assert!(!view.contains(" l12"), "context is two lines: {view}");
    }

    #[test]
    fn missing_build_tool_is_infrastructure_error() {
        let dir = project(&[]);
        let handle = ProjectHandle::new(dir.path(), profile("definitely-not-a-build-tool-xyz", "true"));
        assert!(matches!(handle.run_build(), Err(InfraError::CommandNotFound { .. })));
    }

    #[test]
    fn timeout_is_infrastructure_error_with_partial_output() {
        let dir = project(&[]);
        let mut p = profile("true", "echo started; sleep 5");
        p.test_timeout_secs = 1;
        let handle = ProjectHandle::new(dir.path(), p);
        match handle.run_tests() {
            Err(InfraError::Timeout { partial_output, .. }) => assert!(partial_output.contains("started")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failing_test_trace_keeps_only_project_frames() {
        let dir = project(&[
            ("src/main/Calc.java", "class Calc {}\n"),
            ("src/test/CalcTest.java", "class CalcTest {}\n"),
        ]);
        let script = r#"cat <<'EOF'
Ran 2 tests
FAIL: CalcTest.adds - expected 4 but was 5
    at org.junit.Assert.fail(Assert.java:89)
    at CalcTest.adds(CalcTest.java:12)
    at /usr/lib/jvm/runner/Runner.java:44
    at src/main/Calc.java:3
    caused by arithmetic
done
EOF
exit 1"#;
        let handle = ProjectHandle::new(dir.path(), profile("true", script));
        let fb = handle.run_tests().unwrap();
        assert!(!fb.success);
        assert_eq!(fb.tests_run, Some(2));
        assert_eq!(fb.failures.len(), 1);
        let f = &fb.failures[0];
        assert_eq!(f.test_id, "CalcTest.adds");
        assert_eq!(f.message, "expected 4 but was 5");
        // hand-filtered: framework frames (Assert.java, absolute Runner.java) removed
        assert_eq!(
            f.cleaned_trace,
            "    at CalcTest.adds(CalcTest.java:12)\n    at src/main/Calc.java:3\n    caused by arithmetic"
        );
    }

    #[test]
    fn zero_tests_is_vacuous_pass() {
        let dir = project(&[]);
        let handle = ProjectHandle::new(dir.path(), profile("true", "echo 'Ran 0 tests'"));
        let fb = handle.run_tests().unwrap();
        assert!(fb.success);
        assert_eq!(fb.tests_run, Some(0));
    }

    #[test]
    fn extraction_never_fabricates_locations() {
        let dir = project(&[("x/Y.java", "a\nb\n")]);
        let raw = "x/Y.java:2: error: first\nnoise\n/abs/Z.java:7: error: second\n";
        let handle = ProjectHandle::new(
            dir.path(),
            profile(&format!("printf '{}' >&2; exit 1", raw.replace('\n', "\\n")), "true"),
        );
        let fb = handle.run_build().unwrap();
        assert_eq!(fb.errors.len(), 2);
        for e in &fb.errors {
            assert!(raw.contains(&format!("{}:{}", e.file_path, e.line_number)));
        }
    }

    #[test]
    fn templates_are_quoted() {
        let cmd = render_template("make -C {project_root}", &[("project_root", Path::new("/tmp/a b"))]);
        assert_eq!(cmd, "make -C '/tmp/a b'");
    }
}
