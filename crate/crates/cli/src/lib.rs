//! Command-line orchestration: configuration, run manifests, CSV outputs and
//! the training / sweep / evaluation pipeline behind the `pcmu` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod pipeline;

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for usage errors, 2 for data, configuration and file errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(
    pcmu::agent::AgentError,
    pcmu::attack::AttackError,
    pcmu::data::DataError,
    pcmu::env::EnvError,
    pcmu::mi::MiError,
    pcmu::privacy::PrivacyError
);
