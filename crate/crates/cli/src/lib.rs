//! Library side of the `abyssal` command: scenario loading, the corpus
//! generator and the ablation harness.

pub mod ablation;
pub mod corpus;

use abyssal_core::scenario::{Scenario, ScenarioError};
use abyssal_orchestrator::replay::{replay_log, ReplayError, ReplayReport};
use abyssal_orchestrator::server::SCENARIO_ENV;
use std::path::Path;
use thiserror::Error;

/// Names a scenario compiled into the binary.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Scenario { path: String, source: ScenarioError },
    #[error("unknown built-in scenario `{0}` (available: two_auv)")]
    UnknownBuiltin(String),
    #[error("no scenario given and {SCENARIO_ENV} is not set")]
    NoScenario,
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

pub fn read(path: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_string(), source })
}

/// Loads a scenario from a path, a `builtin:` name, or the environment.
pub fn load_scenario(arg: Option<&str>) -> Result<Scenario, CliError> {
    let from_env = std::env::var(SCENARIO_ENV).ok();
    let arg = arg.map(str::to_string).or(from_env).ok_or(CliError::NoScenario)?;
    if let Some(name) = arg.strip_prefix(BUILTIN_PREFIX) {
        return match name {
            "two_auv" => Ok(abyssal_core::fixtures::two_auv()),
            other => Err(CliError::UnknownBuiltin(other.to_string())),
        };
    }
    let text = read(&arg)?;
    Scenario::from_json(&text).map_err(|source| CliError::Scenario { path: arg, source })
}

/// Mission text from a file, or the argument itself when no such file exists.
pub fn mission_text(arg: &str) -> Result<String, CliError> {
    if Path::new(arg).is_file() {
        read(arg)
    } else {
        Ok(arg.to_string())
    }
}

pub fn replay_file(path: &str) -> Result<ReplayReport, CliError> {
    Ok(replay_log(&read(path)?)?)
}
