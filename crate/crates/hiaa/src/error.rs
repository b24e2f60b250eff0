use std::path::{Path, PathBuf};

use hiaa_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {reason}")]
    MissingInput { path: PathBuf, reason: String },
    #[error("{path}: format_version {found} is not supported (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u64, expected: u32 },
    #[error("{path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn missing(path: &Path, reason: impl Into<String>) -> Self {
        CliError::MissingInput { path: path.to_path_buf(), reason: reason.into() }
    }

    pub fn corrupt(path: &Path, reason: impl ToString) -> Self {
        CliError::CorruptFile { path: path.to_path_buf(), reason: reason.to_string() }
    }

    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingInput { .. } => "missing_input",
            CliError::VersionMismatch { .. } => "version_mismatch",
            CliError::CorruptFile { .. } => "corrupt_file",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::BadFraction { .. } => "config",
                CoreError::NonFiniteLoss { .. } | CoreError::NonFiniteInput => "numeric",
                CoreError::MissingPrediction(_) => "missing_input",
                _ => "invalid_data",
            },
        }
    }

    /// 0 ok, 2 config, 3 missing input, 4 format/version, 5 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "missing_input" | "io" => 3,
            "numeric" => 5,
            _ => 4,
        }
    }
}

/// Maps an IO error on an input file, treating absence as a missing input.
pub fn read_error(path: &Path, source: std::io::Error) -> CliError {
    if source.kind() == std::io::ErrorKind::NotFound {
        CliError::missing(path, "no such file")
    } else {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub fn write_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source }
}
