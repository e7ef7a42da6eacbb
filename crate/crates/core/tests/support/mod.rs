//! Random case generators and brute-force oracles shared by the property
//! tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use warnmend_core::edit::{apply_to_text, FileEdit, Insertion, LineShiftMap};
use warnmend_core::model::{AnalysisReport, RuleType, Warning};

const WORDS: [&str; 6] = ["int x = 0;", "}", "", "return y;", "// note", "x++;"];

/// A file of 1..=200 lines drawn from a tiny vocabulary, so identical lines
/// are common.
pub fn random_lines(rng: &mut impl Rng) -> Vec<String> {
    let n = rng.gen_range(1..=200);
    (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

/// Up to 20 edits (deletions plus insertion blocks) against a file of `len`
/// lines, with distinct deletions and possibly repeated insertion points.
pub fn random_edit(rng: &mut impl Rng, file_name: &str, len: usize) -> FileEdit {
    let total = rng.gen_range(1..=20);
    let mut deletions = BTreeSet::new();
    let mut insertions = Vec::new();
    for k in 0..total {
        if rng.gen_bool(0.5) {
            deletions.insert(rng.gen_range(1..=len as u32));
        } else {
            let count = rng.gen_range(0..=3);
            insertions.push(Insertion {
                line_number: rng.gen_range(1..=len as u32 + 1),
                new_lines: (0..count).map(|j| format!("inserted {k}.{j}")).collect(),
            });
        }
    }
    let mut deletions: Vec<u32> = deletions.into_iter().collect();
    deletions.shuffle(rng);
    FileEdit {
        file_name: file_name.to_string(),
        insertions,
        deletions,
    }
}

fn tag(i: usize) -> String {
    format!("\u{1}original-{i}\u{1}")
}

pub struct OracleResult {
    pub lines: Vec<String>,
    pub forward: Vec<Option<u32>>,
    pub backward: Vec<Option<u32>>,
}

/// Applies `edit` to lines tagged with unique tokens and recovers the line
/// correspondence by finding each token in the result.
pub fn token_oracle(lines: &[String], edit: &FileEdit) -> OracleResult {
    // Slots hold either a tag (an original line) or inserted text; deleted
    // originals become tombstones until the end.
    let mut slots: Vec<Option<String>> = (1..=lines.len()).map(|i| Some(tag(i))).collect();
    for &d in &edit.deletions {
        slots[d as usize - 1] = None;
    }
    let mut by_point: Vec<(u32, usize)> = edit.insertions.iter().enumerate().map(|(k, ins)| (ins.line_number, k)).collect();
    by_point.sort_by(|a, b| b.cmp(a));
    for (point, k) in by_point {
        let at = point as usize - 1;
        for text in edit.insertions[k].new_lines.iter().rev() {
            slots.insert(at, Some(text.clone()));
        }
    }
    let tagged: Vec<String> = slots.into_iter().flatten().collect();

    let position: HashMap<&str, usize> = tagged.iter().enumerate().map(|(p, t)| (t.as_str(), p + 1)).collect();
    let forward: Vec<Option<u32>> = (1..=lines.len())
        .map(|i| position.get(tag(i).as_str()).map(|&p| p as u32))
        .collect();
    let original_of = |t: &str| {
        t.strip_prefix("\u{1}original-")
            .map(|rest| rest.trim_end_matches('\u{1}').parse::<usize>().unwrap())
    };
    let backward = tagged.iter().map(|t| original_of(t).map(|i| i as u32)).collect();
    let untagged = tagged
        .iter()
        .map(|t| original_of(t).map_or_else(|| t.clone(), |i| lines[i - 1].clone()))
        .collect();
    OracleResult {
        lines: untagged,
        forward,
        backward,
    }
}

/// One randomized line-map case: the implementation's map and text versus the
/// oracle's.
pub fn line_map_case(rng: &mut impl Rng) -> Result<(), String> {
    let lines = random_lines(rng);
    let edit = random_edit(rng, "F.java", lines.len());
    let text = lines.join("\n") + "\n";
    let (out, map) = apply_to_text(&text, &edit);
    let oracle = token_oracle(&lines, &edit);
    if map.forward_entries() != oracle.forward.as_slice() || map.backward_entries() != oracle.backward.as_slice() {
        return Err(format!("map mismatch for {edit:?}"));
    }
    let expected = oracle.lines.join("\n") + "\n";
    if out != expected {
        return Err(format!("text mismatch for {edit:?}"));
    }
    Ok(())
}

pub fn warning(file: &str, rule: &str, line: u32) -> Warning {
    Warning {
        repository: "r".into(),
        rule_key: rule.into(),
        file_path: file.into(),
        start_line: line,
        rule_name: String::new(),
        specific_message: format!("at {line}"),
        rule_type: RuleType::CodeSmell,
    }
}

pub struct DiffCase {
    pub before: AnalysisReport,
    pub after: AnalysisReport,
    pub target: Warning,
    pub maps: BTreeMap<String, LineShiftMap>,
    pub injected: Vec<Warning>,
}

type Triple = (String, String, u32);

fn triple(w: &Warning) -> Triple {
    (w.file_path.clone(), w.rule_key.clone(), w.start_line)
}

/// A before/after report pair. `after` holds every surviving warning moved
/// by the edit maps, minus some the fix removed, plus `injected` warnings
/// that have no counterpart in `before`.
pub fn diff_case(rng: &mut impl Rng) -> DiffCase {
    let files = ["A.java", "B.java", "C.java"];
    let rules = ["r1", "r2", "r3"];
    let mut maps = BTreeMap::new();
    let mut lens = BTreeMap::new();
    for f in files {
        let lines = random_lines(rng);
        lens.insert(f, lines.len() as u32);
        if rng.gen_bool(0.7) {
            let edit = random_edit(rng, f, lines.len());
            let (_, map) = apply_to_text(&(lines.join("\n") + "\n"), &edit);
            maps.insert(f.to_string(), map);
        }
    }
    let forward = |f: &str, l: u32| maps.get(f).map_or(Some(l), |m: &LineShiftMap| m.forward(l));
    let backward = |f: &str, l: u32| maps.get(f).map_or(Some(l), |m: &LineShiftMap| m.backward(l));
    let after_len = |f: &str| maps.get(f).map_or(lens[f] as usize, |m: &LineShiftMap| m.modified_len()) as u32;

    let mut before = Vec::new();
    for _ in 0..rng.gen_range(1..=30) {
        let f = *files.choose(rng).unwrap();
        before.push(warning(f, rules.choose(rng).unwrap(), rng.gen_range(1..=lens[f])));
    }
    let target = before[0].clone();
    let mut after = Vec::new();
    let mut dropped = BTreeSet::new();
    for w in &before {
        match forward(&w.file_path, w.start_line) {
            Some(line) if rng.gen_bool(0.85) => after.push(warning(&w.file_path, &w.rule_key, line)),
            _ => {
                dropped.insert(triple(w));
            }
        }
    }
    let mut injected = Vec::new();
    let wanted = rng.gen_range(1..=5);
    let mut attempts = 0;
    while injected.len() < wanted && attempts < 1000 {
        attempts += 1;
        let f = *files.choose(rng).unwrap();
        if after_len(f) == 0 {
            continue;
        }
        let line = rng.gen_range(1..=after_len(f));
        let rule = *rules.choose(rng).unwrap();
        // A warning landing where a removed one used to be is the same
        // triple and cannot be told apart; skip those.
        if let Some(orig) = backward(f, line) {
            if dropped.contains(&(f.to_string(), rule.to_string(), orig)) {
                continue;
            }
        }
        injected.push(warning(f, rule, line));
    }
    after.extend(injected.iter().cloned());
    after.shuffle(rng);
    DiffCase {
        before: AnalysisReport::new("t", "c", before),
        after: AnalysisReport::new("t", "c", after),
        target,
        maps,
        injected,
    }
}

/// Injected warnings missing from `reported`, counted as multisets.
pub fn missed(injected: &[Warning], reported: &[Warning]) -> Vec<Warning> {
    let mut counts: HashMap<Triple, i64> = HashMap::new();
    for w in reported {
        *counts.entry(triple(w)).or_default() += 1;
    }
    let mut out = Vec::new();
    for w in injected {
        let c = counts.entry(triple(w)).or_default();
        if *c > 0 {
            *c -= 1;
        } else {
            out.push(w.clone());
        }
    }
    out
}
