//! Writes one of the bundled demo projects together with a matching config.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use warnmend_core::fixtures::{self, Fixture};

use crate::config::{Config, GatewayKind, GatewaySection, ProjectSection, RunSection};

pub const FIXTURES: [&str; 5] = [
    "running_example",
    "lombok_false_positive",
    "ablation_suite",
    "batch_corpus",
    "seeded_corpus",
];

pub fn write_fixture(name: &str, base: &Path) -> Result<Fixture> {
    Ok(match name {
        "running_example" => fixtures::running_example(base)?,
        "lombok_false_positive" => fixtures::lombok_false_positive(base)?,
        "ablation_suite" => fixtures::ablation_suite(base)?,
        "batch_corpus" => fixtures::batch_corpus(base)?,
        "seeded_corpus" => fixtures::seeded_corpus(base)?,
        other => bail!("unknown fixture `{other}`; available: {}", FIXTURES.join(", ")),
    })
}

/// Config for a fixture: scripted gateway over its scripts directory and
/// output next to the project.
pub fn fixture_config(f: &Fixture, output_dir: PathBuf) -> Config {
    Config {
        analyzer: f.analyzer.clone(),
        project: ProjectSection {
            profile: f.profile.clone(),
            docs_dir: None,
        },
        gateway: GatewaySection {
            kind: GatewayKind::ScriptDir,
            script_dir: Some(f.scripts_dir.clone()),
            ..Default::default()
        },
        run: RunSection {
            output_dir,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Creates `<base>/project`, `<base>/scripts` and `<base>/warnmend.toml`.
pub fn cmd_init(name: &str, base: &Path) -> Result<(Fixture, PathBuf)> {
    if base.join("project").exists() {
        bail!("{} already contains a project", base.display());
    }
    fs::create_dir_all(base).with_context(|| format!("creating {}", base.display()))?;
    let base = base.canonicalize()?;
    let f = write_fixture(name, &base)?;
    let config = fixture_config(&f, base.join("out"));
    let path = base.join("warnmend.toml");
    fs::write(&path, config.to_toml()).with_context(|| format!("writing {}", path.display()))?;
    Ok((f, path))
}
