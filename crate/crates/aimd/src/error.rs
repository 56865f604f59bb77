use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error("missing input {}: {reason}", path.display())]
    MissingInput { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(aimd_core::Error),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn missing(path: &Path, reason: impl ToString) -> Self {
        CliError::MissingInput { path: path.to_path_buf(), reason: reason.to_string() }
    }

    pub fn from_core(e: aimd_core::Error) -> Self {
        match e {
            aimd_core::Error::InvalidConfig(v) => CliError::Validation(v.iter().map(|v| v.to_string()).collect()),
            other => CliError::Core(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput { .. } => 3,
            _ => 1,
        }
    }
}

impl From<aimd_core::Error> for CliError {
    fn from(e: aimd_core::Error) -> Self {
        CliError::from_core(e)
    }
}
