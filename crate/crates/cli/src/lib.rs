//! Experiment harness behind the `zomd` binary: config parsing, runs, sweeps
//! and the verification suite.

pub mod commands;
pub mod config;

use std::fmt;

pub use config::ExperimentConfig;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad override, unknown problem. Exit code 2.
    Config(String),
    /// Domain violations during a run, I/O failures. Exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "config error: {msg}"),
            Self::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<zomd::Error> for CliError {
    fn from(e: zomd::Error) -> Self {
        match e {
            zomd::Error::Config(msg) => Self::Config(msg),
            zomd::Error::ProxDomain(_) | zomd::Error::ProbeOutOfDomain { .. } => Self::Runtime(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}
