//! Persisted run logs: one JSON record per line, a header, every cycle, and
//! the final outcome. A log doubles as a replay script.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ScriptEntry, ScriptedGateway};
use crate::model::{RunOutcome, Warning};
use crate::runtime::CycleRecord;
use crate::subagents::WarningRun;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TrajectoryRecord {
    Header { warning: Warning, version: String },
    Cycle(CycleRecord),
    Outcome(RunOutcome),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub warning: Warning,
    pub cycles: Vec<CycleRecord>,
    pub outcome: Option<RunOutcome>,
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("the log does not start with a header record")]
    MissingHeader,
}

impl Trajectory {
    pub fn from_run(run: &WarningRun) -> Trajectory {
        Trajectory {
            warning: run.outcome.warning.clone(),
            cycles: run.records.clone(),
            outcome: Some(run.outcome.clone()),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut records = vec![TrajectoryRecord::Header {
            warning: self.warning.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }];
        records.extend(self.cycles.iter().cloned().map(TrajectoryRecord::Cycle));
        records.extend(self.outcome.iter().cloned().map(TrajectoryRecord::Outcome));
        records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn parse(text: &str) -> Result<Trajectory, TrajectoryError> {
        let mut warning = None;
        let mut cycles = Vec::new();
        let mut outcome = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TrajectoryRecord = serde_json::from_str(line).map_err(|e| TrajectoryError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match record {
                TrajectoryRecord::Header { warning: w, .. } => warning = Some(w),
                TrajectoryRecord::Cycle(c) if warning.is_some() => cycles.push(c),
                TrajectoryRecord::Outcome(o) if warning.is_some() => outcome = Some(o),
                _ => return Err(TrajectoryError::MissingHeader),
            }
        }
        Ok(Trajectory {
            warning: warning.ok_or(TrajectoryError::MissingHeader)?,
            cycles,
            outcome,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), TrajectoryError> {
        let io_err = |source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
        fs::write(path, self.to_jsonl()).map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Trajectory, TrajectoryError> {
        let text = fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Trajectory::parse(&text)
    }

    /// A script answering every recorded model call with its recorded
    /// response and usage, and failing if the prompt differs from the
    /// recorded one.
    pub fn replay_script(&self) -> ScriptedGateway {
        let entries = self
            .cycles
            .iter()
            .enumerate()
            .map(|(i, c)| ScriptEntry {
                cycle: i as u32 + 1,
                expected_prompt_hash: Some(c.prompt_hash.clone()),
                response: c.response.clone(),
                usage: Some(c.usage),
            })
            .collect();
        ScriptedGateway::new(entries).expect("sequential cycles")
    }

    /// Human-readable view: tool call and output per cycle.
    pub fn render(&self) -> String {
        let mut out = format!("Warning: {}\n", self.warning.location());
        for c in &self.cycles {
            let _ = writeln!(out, "\n[{}] Cycle {}", c.mode, c.cycle);
            match (&c.tool_call, &c.parse_error) {
                (Some(call), _) => {
                    let _ = writeln!(out, "Tool call: {}", call.render());
                }
                (None, Some(err)) => {
                    let _ = writeln!(out, "Unparseable response: {err}");
                }
                (None, None) => {}
            }
            let _ = writeln!(out, "Tool output:\n{}", c.tool_output);
        }
        if let Some(o) = &self.outcome {
            let _ = writeln!(
                out,
                "\nOutcome: {} / {:?} after {}+{} cycles, ${:.4}",
                o.classification.verdict.label(),
                o.status,
                o.cycles_used.classification,
                o.cycles_used.repair,
                o.cost_usd
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{LanguageModel, TokenUsage};
    use crate::model::RuleType;
    use crate::runtime::AgentMode;

    fn warning() -> Warning {
        Warning {
            repository: "r".into(),
            rule_key: "java:S1104".into(),
            file_path: "A.java".into(),
            start_line: 3,
            rule_name: "n".into(),
            specific_message: "m".into(),
            rule_type: RuleType::CodeSmell,
        }
    }

    fn record(cycle: u32, prompt: &str) -> CycleRecord {
        CycleRecord {
            mode: AgentMode::Classify,
            cycle,
            prompt: prompt.into(),
            prompt_hash: crate::gateway::prompt_hash(prompt),
            response: format!("response {cycle}"),
            usage: TokenUsage::new(10, cycle as u64, 2),
            tool_call: None,
            tool_output: "out".into(),
            parse_error: None,
            approval: None,
        }
    }

    #[test]
    fn round_trips_through_jsonl() {
        let t = Trajectory {
            warning: warning(),
            cycles: vec![record(1, "p1"), record(2, "p2")],
            outcome: None,
        };
        let text = t.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"record\":\"header\""));
        assert_eq!(Trajectory::parse(&text).unwrap(), t);
    }

    #[test]
    fn cycle_before_header_is_rejected() {
        let line = serde_json::to_string(&TrajectoryRecord::Cycle(record(1, "p"))).unwrap();
        assert!(matches!(Trajectory::parse(&line), Err(TrajectoryError::MissingHeader)));
        assert!(matches!(Trajectory::parse(""), Err(TrajectoryError::MissingHeader)));
    }

    #[test]
    fn replay_script_checks_prompts_and_returns_recorded_usage() {
        let t = Trajectory {
            warning: warning(),
            cycles: vec![record(1, "p1"), record(2, "p2")],
            outcome: None,
        };
        let g = t.replay_script();
        let c = g.complete("p1").unwrap();
        assert_eq!(c.response, "response 1");
        assert_eq!(c.usage, TokenUsage::new(10, 1, 2));
        assert!(g.complete("drifted").is_err());
    }
}
