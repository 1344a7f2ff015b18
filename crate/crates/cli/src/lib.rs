//! Command implementations behind the `gossipsim` binary.

pub mod check;
pub mod output;
pub mod run;
pub mod sweep;

use std::fmt;
use std::path::Path;

use gossipsim_core::config::{ConfigError, SimConfig};

/// Exit status contract: 0 success, 1 runtime failure, 2 usage or config error.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<gossipsim_core::Error> for Failure {
    fn from(e: gossipsim_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(format!("{e:#}"))
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub fn load_config(path: &Path) -> CmdResult<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    SimConfig::from_json(&text).map_err(|e| match e {
        ConfigError::Parse { .. } => Failure::Usage(format!("{}: {e}", path.display())),
        ConfigError::Invalid(inner) => Failure::Usage(format!("{}: {inner}", path.display())),
    })
}
