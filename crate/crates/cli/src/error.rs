use std::path::Path;

use dg_core::eval::EvalError;
use dg_core::formats::FormatError;
use dg_core::hsse::HsseError;
use dg_core::jsonl::JsonlError;
use dg_core::lse::{LlmError, LseError};
use dg_core::nncore::NnError;
use dg_core::pointcloud::PointCloudError;

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input. Exit 2.
    #[error("{0}")]
    Input(String),
    /// Bad configuration, flag value or credentials. Exit 3.
    #[error("{0}")]
    Config(String),
    /// A computed result broke a property it must hold. Exit 4.
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Fails early when an input path is missing.
pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{}: no such file", path.display())))
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PointCloudError> for CliError {
    fn from(e: PointCloudError) -> Self {
        match e {
            PointCloudError::Argument(m) => CliError::Config(m),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<HsseError> for CliError {
    fn from(e: HsseError) -> Self {
        match e {
            HsseError::Config(m) => CliError::Config(format!("hsse config: {m}")),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<LseError> for CliError {
    fn from(e: LseError) -> Self {
        match e {
            LseError::Template(_) | LseError::Argument(_) => CliError::Config(e.to_string()),
            LseError::Client {
                source: LlmError::MissingKey(_),
                ..
            } => CliError::Config(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::MissingKey(_) => CliError::Config(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Threshold(_) => CliError::Config(e.to_string()),
            e => CliError::Input(e.to_string()),
        }
    }
}
