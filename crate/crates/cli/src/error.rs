use std::path::PathBuf;

use lungsound::rnn::RnnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments.
    #[error("invalid configuration: {0}")]
    Validation(String),
    /// A pipeline stage failed on the data it was given.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: lungsound::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },
    #[error("prediction and truth ids differ: {0}")]
    IdMismatch(String),
    #[error("unknown label {label:?} on line {line}")]
    UnknownLabel { line: usize, label: String },
}

impl CliError {
    /// 1 validation, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage { source: lungsound::Error::Rnn(RnnError::NumericFailure { .. }), .. } => 3,
            CliError::Stage {
                source: lungsound::Error::Rnn(RnnError::InvalidConfig(_)) | lungsound::Error::Dsp(_),
                ..
            } => 1,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

/// Attaches a stage name to library errors.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<lungsound::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage { stage, source: e.into() })
    }
}

pub fn read_to_string(path: &std::path::Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write(path: &std::path::Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
