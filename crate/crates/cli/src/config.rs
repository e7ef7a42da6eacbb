//! The run configuration file (TOML).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use warnmend_core::analyzer::AnalyzerConfig;
use warnmend_core::approver::CheckSet;
use warnmend_core::gateway::{HttpConfig, PricingModel, RetryPolicy};
use warnmend_core::runtime::{PromptTexts, CLASSIFICATION_BUDGET, REPAIR_BUDGET};
use warnmend_core::subagents::RunConfig;
use warnmend_core::tools::DEFAULT_HIT_CAP;
use warnmend_core::workspace::ProjectProfile;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub analyzer: AnalyzerConfig,
    pub project: ProjectSection,
    pub budgets: Budgets,
    pub pricing: PricingModel,
    pub gateway: GatewaySection,
    pub approver: ApproverSection,
    pub prompts: PromptTexts,
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectSection {
    #[serde(flatten)]
    pub profile: ProjectProfile,
    /// Rule documentation directory; relative paths are taken from the
    /// project root. Defaults to `<project>/.rules`.
    pub docs_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub classification: u32,
    pub repair: u32,
    pub urge_threshold: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            classification: CLASSIFICATION_BUDGET,
            repair: REPAIR_BUDGET,
            urge_threshold: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayKind {
    /// One replay script for every warning.
    Script,
    /// `<script_dir>/<warning slug>.jsonl` per warning.
    #[default]
    ScriptDir,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub kind: GatewayKind,
    pub script: Option<PathBuf>,
    pub script_dir: Option<PathBuf>,
    pub http: HttpConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproverSection {
    /// `full`, `without_tests`, `without_analysis_and_tests` or `none`.
    pub checks: String,
}

impl Default for ApproverSection {
    fn default() -> Self {
        ApproverSection {
            checks: CheckSet::Full.as_str().into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitPolicy {
    /// Restore the pristine tree after every warning; approved fixes are only
    /// reported as patches.
    #[default]
    Revert,
    /// Leave approved fixes applied; later warnings see the updated tree.
    Keep,
    /// Like `revert`, and also copy the files changed by each approved fix to
    /// `<output_dir>/staged/<warning slug>/`.
    Stage,
}

impl CommitPolicy {
    pub fn parse(raw: &str) -> Option<CommitPolicy> {
        match raw {
            "revert" => Some(CommitPolicy::Revert),
            "keep" => Some(CommitPolicy::Keep),
            "stage" => Some(CommitPolicy::Stage),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub commit_policy: CommitPolicy,
    pub output_dir: PathBuf,
    pub token_cap: usize,
    pub chars_per_token: usize,
    pub hit_cap: usize,
    pub retry: RetryPolicy,
    /// Context lines in written patches.
    pub patch_context: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        let run = RunConfig::default();
        RunSection {
            commit_policy: CommitPolicy::Revert,
            output_dir: PathBuf::from("warnmend-out"),
            token_cap: run.token_cap,
            chars_per_token: run.chars_per_token,
            hit_cap: DEFAULT_HIT_CAP,
            retry: run.retry,
            patch_context: 3,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    /// Reads a config file. Relative script paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut config = Config::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.gateway.script, &mut config.gateway.script_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.analyzer.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.check_set()?;
        if self.budgets.classification == 0 || self.budgets.repair == 0 {
            return Err(ConfigError("budgets must be positive".into()));
        }
        if self.run.token_cap == 0 || self.run.chars_per_token == 0 {
            return Err(ConfigError("token_cap and chars_per_token must be positive".into()));
        }
        if self.pricing.cached_input_divisor <= 0.0 {
            return Err(ConfigError("pricing.cached_input_divisor must be positive".into()));
        }
        match self.gateway.kind {
            GatewayKind::Script if self.gateway.script.is_none() => Err(ConfigError("gateway kind `script` needs `gateway.script`".into())),
            GatewayKind::ScriptDir if self.gateway.script_dir.is_none() => {
                Err(ConfigError("gateway kind `script_dir` needs `gateway.script_dir`".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn check_set(&self) -> Result<CheckSet, ConfigError> {
        CheckSet::parse(&self.approver.checks).ok_or_else(|| {
            ConfigError(format!(
                "unknown check set `{}` (expected full, without_tests, without_analysis_and_tests or none)",
                self.approver.checks
            ))
        })
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            classification_budget: self.budgets.classification,
            repair_budget: self.budgets.repair,
            urge_threshold: self.budgets.urge_threshold,
            token_cap: self.run.token_cap,
            chars_per_token: self.run.chars_per_token,
            hit_cap: self.run.hit_cap,
            retry: self.run.retry,
            pricing: self.pricing,
            texts: self.prompts.clone(),
        }
    }

    pub fn docs_dir(&self, project_root: &Path) -> PathBuf {
        match &self.project.docs_dir {
            Some(d) if d.is_absolute() => d.clone(),
            Some(d) => project_root.join(d),
            None => project_root.join(".rules"),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
