use std::io;
use std::path::{Path, PathBuf};

use seqmia_core::Error as CoreError;

pub type Result<T, E = ToolError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("run directory {} is in use (lock file {} exists)", .0.display(), .0.join(crate::run::LOCK_FILE).display())]
    Locked(PathBuf),
    #[error("{}: {msg}", path.display())]
    Corrupt { path: PathBuf, msg: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ToolError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        ToolError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, line: usize, msg: impl Into<String>) -> Self {
        ToolError::Parse {
            path: path.as_ref().to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub fn corrupt(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        ToolError::Corrupt {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    /// 2 for problems the operator can fix (config, inputs, sizing), 1 for
    /// everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            ToolError::Core(e) => match e {
                CoreError::Oracle(_) | CoreError::PartialTranslation { .. } => 1,
                _ => 2,
            },
            ToolError::Io { source, .. } => {
                if source.kind() == io::ErrorKind::NotFound {
                    2
                } else {
                    1
                }
            }
            ToolError::Parse { .. } | ToolError::Config(_) | ToolError::Locked(_) | ToolError::Corrupt { .. } => 2,
            ToolError::Internal(_) => 1,
        }
    }
}
