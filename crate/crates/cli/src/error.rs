use std::path::PathBuf;

use ctxexp_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input or configuration. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// A stage failed on valid input. Exit code 3.
    #[error("{stage}: {message}")]
    Compute { stage: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 2,
            CliError::Compute { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Tag a core error with the stage it came from.
    pub fn from_core(stage: &str, e: CoreError) -> Self {
        if is_input_error(&e) {
            CliError::Validation(format!("{stage}: {e}"))
        } else {
            CliError::Compute {
                stage: stage.to_string(),
                message: e.to_string(),
            }
        }
    }
}

fn is_input_error(e: &CoreError) -> bool {
    match e {
        CoreError::Person { source, .. } => is_input_error(source),
        CoreError::InvalidCoordinate(_)
        | CoreError::InvalidGrid(_)
        | CoreError::InvalidPolygon(_)
        | CoreError::RegionFile(_)
        | CoreError::InvalidRecord { .. }
        | CoreError::IncoherentRates(_)
        | CoreError::IncompleteTable(_)
        | CoreError::InvalidKernel(_)
        | CoreError::InvalidFixes { .. }
        | CoreError::InvalidLevel(_) => true,
        _ => false,
    }
}

/// Shorthand for `map_err(|e| CliError::from_core(stage, e))`.
pub trait StageContext<T> {
    fn stage(self, stage: &str) -> CliResult<T>;
}

impl<T> StageContext<T> for Result<T, CoreError> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(stage, e))
    }
}
