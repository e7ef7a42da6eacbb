use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use warnmend::commands::{cmd_ablate, cmd_analyze, cmd_batch, cmd_replay, cmd_triage, SelectError, Selector};
use warnmend::config::{CommitPolicy, Config, ConfigError, GatewayKind};
use warnmend::init::{cmd_init, FIXTURES};
use warnmend_core::approver::CheckSet;
use warnmend_core::model::RunStatus;

#[derive(Parser)]
#[command(
    name = "warnmend",
    version,
    about = "Triage and repair static-analysis warnings with a language-model agent"
)]
struct Cli {
    /// TOML config file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    #[arg(short, long, global = true)]
    output_dir: Option<PathBuf>,
    /// Use one replay script for every warning.
    #[arg(long, global = true, conflicts_with = "script_dir")]
    script: Option<PathBuf>,
    /// Use `<dir>/<warning slug>.jsonl` per warning.
    #[arg(long, global = true)]
    script_dir: Option<PathBuf>,
    /// Talk to the HTTP endpoint from the config or environment.
    #[arg(long, global = true, conflicts_with_all = ["script", "script_dir"])]
    http: bool,
    /// revert, keep or stage.
    #[arg(long, global = true)]
    commit_policy: Option<String>,
    /// full, without_tests, without_analysis_and_tests or none.
    #[arg(long, global = true)]
    checks: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyzer and write the warning report.
    Analyze {
        project: PathBuf,
        /// Report path (default `<output-dir>/report.jsonl`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Classify and repair one warning.
    Triage {
        project: PathBuf,
        #[arg(long)]
        file: Option<String>,
        #[arg(long)]
        line: Option<u32>,
        #[arg(long)]
        rule: Option<String>,
    },
    /// Classify and repair every warning.
    Batch {
        project: PathBuf,
        /// Worker count; each worker gets its own copy of the project.
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare approval outcomes with fewer approver checks.
    Ablate {
        project: PathBuf,
        /// Check set to run; every set when omitted.
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Re-run a recorded trajectory.
    Replay { project: PathBuf, trajectory: PathBuf },
    /// Write a bundled demo project with scripts and a config.
    Init {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(FIXTURES))]
        fixture: String,
        dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<Config, ConfigError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let o = &cli.overrides;
    if let Some(d) = &o.output_dir {
        config.run.output_dir = d.clone();
    }
    if let Some(s) = &o.script {
        config.gateway.kind = GatewayKind::Script;
        config.gateway.script = Some(s.clone());
    }
    if let Some(d) = &o.script_dir {
        config.gateway.kind = GatewayKind::ScriptDir;
        config.gateway.script_dir = Some(d.clone());
    }
    if o.http {
        config.gateway.kind = GatewayKind::Http;
    }
    if let Some(p) = &o.commit_policy {
        config.run.commit_policy =
            CommitPolicy::parse(p).ok_or_else(|| ConfigError(format!("unknown commit policy `{p}` (expected revert, keep or stage)")))?;
    }
    if let Some(c) = &o.checks {
        config.approver.checks = c.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Command::Init { fixture, dir } = &cli.command {
        let (f, config) = cmd_init(fixture, dir)?;
        println!("project: {}", f.root.display());
        println!("config:  {}", config.display());
        return Ok(ExitCode::SUCCESS);
    }
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Analyze { project, report } => {
            let (r, path) = cmd_analyze(project, &config, report.as_deref())?;
            println!("{} warnings written to {}", r.len(), path.display());
            for (rule, n) in r.counts_by_rule() {
                println!("  {rule}: {n}");
            }
        }
        Command::Triage { project, file, line, rule } => {
            let selector = Selector {
                file: file.clone(),
                line: *line,
                rule: rule.clone(),
            };
            let wr = cmd_triage(project, &selector, &config)?;
            let o = &wr.outcome;
            println!("{} {}", o.warning.location(), o.warning.rule_key);
            println!("verdict: {}", o.classification.verdict.label());
            println!(
                "status:  {}",
                match &o.status {
                    RunStatus::Approved => "approved".to_string(),
                    RunStatus::NotApproved => "not approved".to_string(),
                    RunStatus::Error(m) => format!("error: {m}"),
                }
            );
            println!(
                "cycles:  {} classification, {} repair; cost ${:.4}",
                o.cycles_used.classification, o.cycles_used.repair, o.cost_usd
            );
            if let Some(p) = &wr.patch {
                println!("patch:   {}", p.display());
            }
            if let Some(t) = &wr.trajectory {
                println!("log:     {}", t.display());
            }
            if !o.approved {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Batch { project, jobs } => {
            let result = cmd_batch(project, &config, *jobs)?;
            print!("{}", result.summary.render_table());
        }
        Command::Ablate { project, sets } => {
            let sets = if sets.is_empty() {
                CheckSet::ALL.to_vec()
            } else {
                sets.iter()
                    .map(|s| CheckSet::parse(s).ok_or_else(|| ConfigError(format!("unknown check set `{s}`"))))
                    .collect::<Result<Vec<_>, _>>()?
            };
            print!("{}", cmd_ablate(project, &config, &sets)?.render_table());
        }
        Command::Replay { project, trajectory } => {
            let r = cmd_replay(project, trajectory, &config).context("replay failed")?;
            println!("replayed {}: {:?}", r.outcome.warning.location(), r.outcome.status);
            if r.matches {
                println!("outcome matches the recording");
            } else {
                println!("outcome differs from the recording");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Init { .. } => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() {
                ExitCode::from(3)
            } else if e.is::<SelectError>() {
                ExitCode::from(4)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
