use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// An input file named by a command-line flag could not be read.
    #[error("--{flag}: cannot read {}: {source}", path.display())]
    InputFile {
        flag: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("corrupt draws in {}: {msg}", path.display())]
    CorruptDraws { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] dosefactor_core::Error),
}

impl CliError {
    pub fn malformed(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CliError::Malformed { path: path.into(), msg: msg.to_string() }
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Output { path: path.into(), source }
    }

    pub fn corrupt(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CliError::CorruptDraws { path: path.into(), msg: msg.to_string() }
    }

    /// Process exit code: 2 for input problems, 3 for numerical failures
    /// and unreadable draws.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if !e.is_input_error() => 3,
            CliError::CorruptDraws { .. } => 3,
            _ => 2,
        }
    }
}
