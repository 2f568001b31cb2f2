use std::fmt;

use sc_gan_core::corpus::CorpusError;
use sc_gan_core::trainer::TrainError;

/// Exit status 2 for bad inputs, 1 for failures while running.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

/// Corpus errors while reading user inputs are configuration errors.
pub fn corpus_input(e: CorpusError) -> CliError {
    CliError::Config(e.to_string())
}

pub fn write_err(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("writing {}: {e}", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;
