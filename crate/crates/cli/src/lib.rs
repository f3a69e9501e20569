//! Library side of the `barrage` command-line tool.
//!
//! Each subcommand is a function from a [`ScenarioFile`] plus [`RunOptions`]
//! to CSV tables, so tests can drive them without spawning a process.

pub mod commands;
pub mod csv;
pub mod scenario;
pub mod validate;

use std::path::PathBuf;

pub use scenario::ScenarioFile;

/// Errors are split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed invocation or scenario file. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// A value the engines refuse, or a failed validation. Exit code 1.
    #[error("{0}")]
    Invalid(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<barrage::Error> for CliError {
    fn from(e: barrage::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invalid(_) | CliError::Io(_) => 1,
        }
    }
}

/// Command-line overrides of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub quiet: bool,
}

impl RunOptions {
    /// Output directory: the flag, else the scenario's, else `out`.
    pub fn out_dir(&self, scenario: &ScenarioFile) -> PathBuf {
        self.out
            .clone()
            .or_else(|| scenario.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Applies `--seed` and `--trials` to a scenario.
    pub fn apply(&self, scenario: &mut ScenarioFile) {
        if let Some(seed) = self.seed {
            scenario.simulation.seed = seed;
            scenario.optimization.seed = seed;
        }
        if let Some(trials) = self.trials {
            scenario.simulation.trials = trials;
        }
    }
}
