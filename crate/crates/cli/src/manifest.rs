//! Run manifests: the resolved command and configuration written next to
//! every output so the run can be replayed exactly.

use std::path::{Path, PathBuf};
use std::process::Command as Process;

use serde::{Deserialize, Serialize};

use crate::commands::Command;
use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool_version: String,
    /// `git rev-parse HEAD` of the working directory, when available.
    pub git_revision: String,
    pub command: Command,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: Command, config: RunConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            git_revision: git_revision(),
            command,
            config,
        }
    }

    /// `<output>.manifest.toml`
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.toml");
        output.with_file_name(name)
    }

    pub fn write_next_to(&self, output: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path_for(output);
        let text = toml::to_string(self).map_err(|e| CliError::Data(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        m.config.validate()?;
        Ok(m)
    }
}

fn git_revision() -> String {
    Process::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}
