use std::path::PathBuf;

use thiserror::Error;

/// Failures of the experiment runner, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerical(#[from] geophase::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io { .. } => 1,
            CliError::Numerical(e) if is_unsupported(e) => 4,
            CliError::Numerical(geophase::Error::Contract(_)) => 3,
            CliError::Numerical(_) => 2,
        }
    }
}

/// True for failures that signal a parameter regime outside the model's scope.
pub fn is_unsupported(e: &geophase::Error) -> bool {
    match e {
        geophase::Error::UnsupportedRegime(_) | geophase::Error::PoleDegeneracy => true,
        geophase::Error::Ensemble { source, .. } => is_unsupported(source),
        _ => false,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
