//! Command-line driver: configuration, the five commands, and demo fixtures.

pub mod commands;
pub mod config;
pub mod init;

pub use commands::{
    cmd_ablate, cmd_analyze, cmd_batch, cmd_replay, cmd_triage, select, AblationReport, AblationRow, BatchResult, OutputLayout,
    ReplayResult, Runner, SelectError, Selector, Summary, SummaryRow, WarningReport,
};
pub use config::{CommitPolicy, Config, ConfigError, GatewayKind};
