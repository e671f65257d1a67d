use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{stage}: {source}")]
    Numerical { stage: &'static str, source: mcis_core::Error },

    #[error("{0}")]
    Tolerance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Parse { .. } | CliError::Io { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Tolerance(_) => 4,
        }
    }
}

/// Attaches a pipeline stage to core errors.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for mcis_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            mcis_core::Error::InvalidInput(m) => CliError::Validation(format!("{stage}: {m}")),
            source => CliError::Numerical { stage, source },
        })
    }
}
