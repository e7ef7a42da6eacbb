//! Multi-file line edit scripts and the line correspondence they induce.
//!
//! A fix is a JSON array of per-file entries:
//!
//! ```json
//! [{ "file_name": "src/A.java",
//!    "insertions": [{ "line_number": 16, "new_lines": ["import x.Y;"] }],
//!    "deletions": [82] }]
//! ```
//!
//! Every line number refers to the original file. Deleted lines are removed,
//! and each insertion is placed immediately before its original line, so
//! deleting N and inserting at N replaces line N. Inserting at `len + 1`
//! appends. Several insertions at the same line keep payload order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::workspace::{ProjectHandle, WorkspaceError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub line_number: u32,
    pub new_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEdit {
    pub file_name: String,
    #[serde(default)]
    pub insertions: Vec<Insertion>,
    #[serde(default)]
    pub deletions: Vec<u32>,
}

impl FileEdit {
    pub fn is_noop(&self) -> bool {
        self.insertions.iter().all(|i| i.new_lines.is_empty()) && self.deletions.is_empty()
    }

    /// Number of lines touched (deleted plus inserted).
    pub fn changed_lines(&self) -> usize {
        self.deletions.len() + self.insertions.iter().map(|i| i.new_lines.len()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixSpec {
    pub files: Vec<FileEdit>,
}

impl FixSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fix serializes")
    }

    pub fn file_names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|f| f.file_name.as_str())
    }

    /// Checks the fix against the files on disk: every file must exist and
    /// every line reference must be in range. All violations are returned.
    pub fn check_against(&self, root: &Path) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        for (i, entry) in self.files.iter().enumerate() {
            let path = root.join(&entry.file_name);
            let content = match fs::read(&path) {
                Ok(bytes) if path.is_file() => String::from_utf8_lossy(&bytes).into_owned(),
                _ => {
                    violations.push(Violation::new(
                        format!("[{i}].file_name"),
                        format!(
                            "file `{}` does not exist (creating, renaming or deleting files is not supported)",
                            entry.file_name
                        ),
                    ));
                    continue;
                }
            };
            let len = split_lines(&content).0.len() as u32;
            for (j, ins) in entry.insertions.iter().enumerate() {
                if ins.line_number > len + 1 {
                    violations.push(Violation::new(
                        format!("[{i}].insertions[{j}].line_number"),
                        format!(
                            "line {} is out of range for `{}` ({} lines; the last insertion point is {})",
                            ins.line_number,
                            entry.file_name,
                            len,
                            len + 1
                        ),
                    ));
                }
            }
            for (j, &d) in entry.deletions.iter().enumerate() {
                if d > len {
                    violations.push(Violation::new(
                        format!("[{i}].deletions[{j}]"),
                        format!("cannot delete line {d} of `{}` ({len} lines)", entry.file_name),
                    ));
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum FixError {
    #[error("fix is not valid JSON (line {line}, column {column}): {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("fix is invalid:\n{}", render_violations(.0))]
    Invalid(Vec<Violation>),
}

fn render_violations(vs: &[Violation]) -> String {
    vs.iter().map(|v| format!("- {v}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error)]
pub enum EditError {
    #[error(transparent)]
    Fix(#[from] FixError),
    #[error("applying the fix failed and was rolled back: {0}")]
    Io(#[source] std::io::Error),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("cannot compose line maps: left map has {left_modified} modified lines, right map expects {right_original}")]
    DomainMismatch { left_modified: usize, right_original: usize },
}

/// Parses and structurally validates a fix payload.
pub fn parse_fix(payload: &str) -> Result<FixSpec, FixError> {
    let value: Value = serde_json::from_str(payload).map_err(|e| FixError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    parse_fix_value(&value)
}

pub fn parse_fix_value(value: &Value) -> Result<FixSpec, FixError> {
    let mut violations = Vec::new();
    let Some(entries) = value.as_array() else {
        return Err(FixError::Invalid(vec![Violation::new("$", "expected an array of file entries")]));
    };
    if entries.is_empty() {
        return Err(FixError::Invalid(vec![Violation::new("$", "empty fix: no file entries")]));
    }
    let mut files = Vec::new();
    let mut seen_files = BTreeSet::new();
    for (i, entry) in entries.iter().enumerate() {
        let loc = format!("[{i}]");
        let Some(obj) = entry.as_object() else {
            violations.push(Violation::new(loc, "expected an object"));
            continue;
        };
        for key in obj.keys() {
            if !matches!(key.as_str(), "file_name" | "insertions" | "deletions") {
                violations.push(Violation::new(format!("{loc}.{key}"), "unknown field"));
            }
        }
        let file_name = match obj.get("file_name") {
            Some(Value::String(s)) if !s.trim().is_empty() => {
                if let Err(msg) = check_relative(s) {
                    violations.push(Violation::new(format!("{loc}.file_name"), msg));
                }
                if !seen_files.insert(s.clone()) {
                    violations.push(Violation::new(
                        format!("{loc}.file_name"),
                        format!("duplicate file entry for `{s}`; merge the edits into one entry"),
                    ));
                }
                s.clone()
            }
            Some(_) => {
                violations.push(Violation::new(format!("{loc}.file_name"), "expected a non-empty string"));
                String::new()
            }
            None => {
                violations.push(Violation::new(format!("{loc}.file_name"), "missing field"));
                String::new()
            }
        };

        let mut insertions = Vec::new();
        match obj.get("insertions") {
            None | Some(Value::Null) => {}
            Some(Value::Array(items)) => {
                for (j, item) in items.iter().enumerate() {
                    let iloc = format!("{loc}.insertions[{j}]");
                    let Some(io) = item.as_object() else {
                        violations.push(Violation::new(iloc, "expected an object"));
                        continue;
                    };
                    for key in io.keys() {
                        if !matches!(key.as_str(), "line_number" | "new_lines") {
                            violations.push(Violation::new(format!("{iloc}.{key}"), "unknown field"));
                        }
                    }
                    let line_number = positive_line(io.get("line_number"), &format!("{iloc}.line_number"), &mut violations);
                    let new_lines = match io.get("new_lines") {
                        Some(Value::Array(ls)) => {
                            let mut out = Vec::new();
                            for (k, l) in ls.iter().enumerate() {
                                match l.as_str() {
                                    Some(s) if s.contains('\n') => violations.push(Violation::new(
                                        format!("{iloc}.new_lines[{k}]"),
                                        "a line must not contain a newline; split it into several entries",
                                    )),
                                    Some(s) => out.push(s.to_string()),
                                    None => violations.push(Violation::new(format!("{iloc}.new_lines[{k}]"), "expected a string")),
                                }
                            }
                            out
                        }
                        Some(_) => {
                            violations.push(Violation::new(format!("{iloc}.new_lines"), "expected an array of strings"));
                            Vec::new()
                        }
                        None => {
                            violations.push(Violation::new(format!("{iloc}.new_lines"), "missing field"));
                            Vec::new()
                        }
                    };
                    if let Some(line_number) = line_number {
                        insertions.push(Insertion { line_number, new_lines });
                    }
                }
            }
            Some(_) => violations.push(Violation::new(format!("{loc}.insertions"), "expected an array")),
        }

        let mut deletions = Vec::new();
        match obj.get("deletions") {
            None | Some(Value::Null) => {}
            Some(Value::Array(items)) => {
                let mut seen = BTreeSet::new();
                for (j, item) in items.iter().enumerate() {
                    let dloc = format!("{loc}.deletions[{j}]");
                    if let Some(n) = positive_line(Some(item), &dloc, &mut violations) {
                        if !seen.insert(n) {
                            violations.push(Violation::new(dloc, format!("duplicate deletion of line {n}")));
                        } else {
                            deletions.push(n);
                        }
                    }
                }
            }
            Some(_) => violations.push(Violation::new(format!("{loc}.deletions"), "expected an array")),
        }
        files.push(FileEdit {
            file_name,
            insertions,
            deletions,
        });
    }
    if violations.is_empty() {
        Ok(FixSpec { files })
    } else {
        Err(FixError::Invalid(violations))
    }
}

fn positive_line(value: Option<&Value>, loc: &str, violations: &mut Vec<Violation>) -> Option<u32> {
    match value {
        None => {
            violations.push(Violation::new(loc, "missing field"));
            None
        }
        Some(v) => match v.as_i64() {
            Some(n) if n >= 1 && n <= u32::MAX as i64 => Some(n as u32),
            Some(n) => {
                violations.push(Violation::new(loc, format!("line numbers are 1-based; got {n}")));
                None
            }
            None => {
                violations.push(Violation::new(loc, format!("expected a positive integer, found {v}")));
                None
            }
        },
    }
}

fn check_relative(path: &str) -> Result<(), String> {
    let p = Path::new(path);
    if p.is_absolute() {
        return Err(format!("`{path}` must be relative to the project root"));
    }
    if p.components()
        .any(|c| matches!(c, Component::ParentDir | Component::Prefix(_) | Component::RootDir))
    {
        return Err(format!("`{path}` must stay inside the project root"));
    }
    Ok(())
}

/// Splits content into lines without touching `\r`, reporting whether the
/// content ended with a newline.
pub fn split_lines(content: &str) -> (Vec<&str>, bool) {
    if content.is_empty() {
        return (Vec::new(), false);
    }
    let trailing = content.ends_with('\n');
    let body = if trailing { &content[..content.len() - 1] } else { content };
    (body.split('\n').collect(), trailing)
}

fn join_lines(lines: &[String], trailing_newline: bool) -> String {
    let mut out = lines.join("\n");
    if trailing_newline && !lines.is_empty() {
        out.push('\n');
    }
    out
}

/// Original ↔ modified line correspondence for one file. Lines are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineShiftMap {
    forward: Vec<Option<u32>>,
    backward: Vec<Option<u32>>,
}

impl LineShiftMap {
    pub fn identity(lines: usize) -> LineShiftMap {
        let ids: Vec<Option<u32>> = (1..=lines as u32).map(Some).collect();
        LineShiftMap {
            forward: ids.clone(),
            backward: ids,
        }
    }

    /// Builds a map from the forward direction alone.
    ///
    /// Panics if `forward` is not strictly increasing on its defined entries
    /// or points past `modified_len`.
    pub fn from_forward(forward: Vec<Option<u32>>, modified_len: usize) -> LineShiftMap {
        let mut backward = vec![None; modified_len];
        let mut last = 0;
        for (i, target) in forward.iter().enumerate() {
            if let Some(t) = *target {
                assert!(t > last && (t as usize) <= modified_len, "forward map must be strictly increasing");
                last = t;
                backward[t as usize - 1] = Some(i as u32 + 1);
            }
        }
        LineShiftMap { forward, backward }
    }

    pub fn original_len(&self) -> usize {
        self.forward.len()
    }

    pub fn modified_len(&self) -> usize {
        self.backward.len()
    }

    /// Modified line for an original line; `None` if deleted or out of range.
    pub fn forward(&self, line: u32) -> Option<u32> {
        line.checked_sub(1).and_then(|i| self.forward.get(i as usize).copied().flatten())
    }

    /// Original line for a modified line; `None` if inserted or out of range.
    pub fn backward(&self, line: u32) -> Option<u32> {
        line.checked_sub(1).and_then(|i| self.backward.get(i as usize).copied().flatten())
    }

    pub fn is_identity(&self) -> bool {
        self.forward.len() == self.backward.len() && self.forward.iter().enumerate().all(|(i, t)| *t == Some(i as u32 + 1))
    }

    pub fn forward_entries(&self) -> &[Option<u32>] {
        &self.forward
    }

    pub fn backward_entries(&self) -> &[Option<u32>] {
        &self.backward
    }
}

/// Relational composition: `a` first, then `b`.
pub fn compose_shift(a: &LineShiftMap, b: &LineShiftMap) -> Result<LineShiftMap, EditError> {
    if a.modified_len() != b.original_len() {
        return Err(EditError::DomainMismatch {
            left_modified: a.modified_len(),
            right_original: b.original_len(),
        });
    }
    let forward = a.forward.iter().map(|t| t.and_then(|m| b.forward(m))).collect();
    let backward = b.backward.iter().map(|t| t.and_then(|m| a.backward(m))).collect();
    Ok(LineShiftMap { forward, backward })
}

/// Applies one file's edits to its content. Pure; no validation beyond
/// ignoring out-of-range references (callers validate first).
pub fn apply_to_text(original: &str, edit: &FileEdit) -> (String, LineShiftMap) {
    let (lines, trailing) = split_lines(original);
    let n = lines.len();
    let deleted: BTreeSet<u32> = edit.deletions.iter().copied().collect();
    let mut inserts: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for ins in &edit.insertions {
        inserts
            .entry(ins.line_number)
            .or_default()
            .extend(ins.new_lines.iter().map(String::as_str));
    }

    let mut out: Vec<String> = Vec::with_capacity(n + edit.changed_lines());
    let mut forward = vec![None; n];
    let mut backward = Vec::with_capacity(n);
    for line in 1..=n as u32 + 1 {
        if let Some(new_lines) = inserts.get(&line) {
            for l in new_lines {
                out.push((*l).to_string());
                backward.push(None);
            }
        }
        if line as usize <= n && !deleted.contains(&line) {
            out.push(lines[line as usize - 1].to_string());
            backward.push(Some(line));
            forward[line as usize - 1] = Some(out.len() as u32);
        }
    }
    // A file that had no trailing newline keeps none; a file that was empty
    // and gains lines gets one.
    let trailing = if n == 0 { true } else { trailing };
    (join_lines(&out, trailing), LineShiftMap { forward, backward })
}

/// Applies a validated fix to the project. All files are rewritten or none:
/// an I/O failure restores every file already touched.
pub fn apply_fix(handle: &mut ProjectHandle, fix: &FixSpec) -> Result<BTreeMap<String, LineShiftMap>, EditError> {
    fix.check_against(handle.root()).map_err(|v| EditError::Fix(FixError::Invalid(v)))?;
    let names: Vec<String> = fix.file_names().map(String::from).collect();
    handle.track(&names)?;

    let mut staged = Vec::new();
    let mut maps = BTreeMap::new();
    for entry in &fix.files {
        let path = handle.root().join(&entry.file_name);
        let original = fs::read(&path).map_err(EditError::Io)?;
        let original = String::from_utf8_lossy(&original).into_owned();
        let (content, map) = apply_to_text(&original, entry);
        staged.push((entry.file_name.clone(), path, content));
        maps.insert(entry.file_name.clone(), map);
    }

    let mut written = Vec::new();
    for (name, path, content) in &staged {
        if let Err(e) = fs::write(path, content) {
            handle.restore_files(&written)?;
            return Err(EditError::Io(e));
        }
        written.push(name.clone());
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> String {
        (1..=n).map(|i| format!("line {i}\n")).collect()
    }

    #[test]
    fn replace_idiom_keeps_length() {
        let original = numbered(160);
        let edit = FileEdit {
            file_name: "f".into(),
            insertions: vec![Insertion {
                line_number: 157,
                new_lines: vec!["return id(info.getNumber());".into()],
            }],
            deletions: vec![157],
        };
        let (out, map) = apply_to_text(&original, &edit);
        let (lines, _) = split_lines(&out);
        assert_eq!(lines.len(), 160);
        assert_eq!(lines[156], "return id(info.getNumber());");
        assert_eq!(lines[155], "line 156");
        assert_eq!(lines[157], "line 158");
        assert_eq!(map.forward(157), None);
        assert_eq!(map.backward(157), None);
        assert_eq!(map.forward(158), Some(158));
    }

    #[test]
    fn offsets_after_delete_and_insert() {
        let edit = FileEdit {
            file_name: "f".into(),
            insertions: vec![Insertion {
                line_number: 10,
                new_lines: vec!["a".into(), "b".into()],
            }],
            deletions: vec![3],
        };
        let (_, map) = apply_to_text(&numbered(20), &edit);
        assert_eq!(map.forward(15), Some(16));
        assert_eq!(map.forward(3), None);
        // inserted lines land at modified 9 and 10
        assert_eq!(map.backward(9), None);
        assert_eq!(map.backward(10), None);
        assert_eq!(map.backward(11), Some(10));
        assert_eq!(map.modified_len(), 21);
    }

    #[test]
    fn empty_edit_is_identity() {
        let edit = FileEdit {
            file_name: "f".into(),
            insertions: vec![],
            deletions: vec![],
        };
        let original = numbered(7);
        let (out, map) = apply_to_text(&original, &edit);
        assert_eq!(out, original);
        assert!(map.is_identity());
        assert_eq!(map, LineShiftMap::identity(7));
    }

    #[test]
    fn append_and_preserve_missing_trailing_newline() {
        let edit = FileEdit {
            file_name: "f".into(),
            insertions: vec![Insertion {
                line_number: 3,
                new_lines: vec!["c".into()],
            }],
            deletions: vec![],
        };
        let (out, _) = apply_to_text("a\nb", &edit);
        assert_eq!(out, "a\nb\nc");
        let (out, _) = apply_to_text("a\r\nb\r\n", &edit);
        assert_eq!(out, "a\r\nb\r\nc\n");
        let (out, _) = apply_to_text(
            "",
            &FileEdit {
                insertions: vec![Insertion {
                    line_number: 1,
                    new_lines: vec!["x".into()],
                }],
                ..edit
            },
        );
        assert_eq!(out, "x\n");
    }

    #[test]
    fn same_line_insertions_keep_payload_order() {
        let edit = FileEdit {
            file_name: "f".into(),
            insertions: vec![
                Insertion {
                    line_number: 2,
                    new_lines: vec!["first".into()],
                },
                Insertion {
                    line_number: 2,
                    new_lines: vec!["second".into()],
                },
            ],
            deletions: vec![],
        };
        let (out, _) = apply_to_text("a\nb\n", &edit);
        assert_eq!(out, "a\nfirst\nsecond\nb\n");
    }

    #[test]
    fn duplicate_deletion_is_rejected() {
        let err = parse_fix(r#"[{"file_name":"A.java","insertions":[],"deletions":[82,82]}]"#).unwrap_err();
        match err {
            FixError::Invalid(v) => {
                assert_eq!(v.len(), 1);
                assert!(v[0].message.contains("duplicate deletion"), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_payload_is_rejected() {
        match parse_fix("[]").unwrap_err() {
            FixError::Invalid(v) => assert!(v[0].message.contains("empty fix")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported() {
        let payload = r#"[
            {"file_name":"/abs/A.java","insertions":[{"line_number":0,"new_lines":["x"]}],"deletions":[1,1,-2]},
            {"file_name":"../B.java","extra":true}
        ]"#;
        match parse_fix(payload).unwrap_err() {
            FixError::Invalid(v) => {
                let text: Vec<String> = v.iter().map(|v| v.to_string()).collect();
                assert_eq!(v.len(), 6, "{text:#?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_location() {
        match parse_fix("[{\"file_name\": \"A.java\",\n  \"deletions\": [1,}]").unwrap_err() {
            FixError::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compose_rejects_mismatched_domains() {
        let a = LineShiftMap::identity(3);
        let b = LineShiftMap::identity(4);
        assert!(matches!(compose_shift(&a, &b), Err(EditError::DomainMismatch { .. })));
    }

    #[test]
    fn compose_with_identity() {
        let edit = FileEdit {
            file_name: "f".into(),
            insertions: vec![Insertion {
                line_number: 2,
                new_lines: vec!["x".into()],
            }],
            deletions: vec![4],
        };
        let (_, m) = apply_to_text(&numbered(6), &edit);
        assert_eq!(compose_shift(&LineShiftMap::identity(6), &m).unwrap(), m);
        assert_eq!(compose_shift(&m, &LineShiftMap::identity(m.modified_len())).unwrap(), m);
    }
}
