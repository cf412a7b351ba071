use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: urbanca::Error,
    },

    #[error(transparent)]
    Core(#[from] urbanca::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input, 3 for numeric divergence, 4 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Config(_) => return 2,
            CliError::Io { .. } => return 4,
            CliError::Stage { source, .. } | CliError::Core(source) => source,
        };
        match core {
            urbanca::Error::Divergence { .. } => 3,
            urbanca::Error::Io { .. } | urbanca::Error::Stream(_) => 4,
            _ => 2,
        }
    }
}

/// Attaches a stage name (usually a file or pipeline step) to core errors.
pub trait Context<T> {
    fn stage(self, stage: impl std::fmt::Display) -> CliResult<T>;
}

impl<T> Context<T> for urbanca::Result<T> {
    fn stage(self, stage: impl std::fmt::Display) -> CliResult<T> {
        self.map_err(|source| CliError::Stage {
            stage: stage.to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let div = urbanca::Error::Divergence {
            epoch: 3,
            message: "nan".into(),
        };
        assert_eq!(CliError::from(div).exit_code(), 3);
        let missing: urbanca::Result<()> = Err(urbanca::Error::Io {
            path: "a".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
        assert_eq!(missing.stage("reading a").unwrap_err().exit_code(), 4);
        assert_eq!(CliError::from(urbanca::Error::Invalid("bad".into())).exit_code(), 2);
    }
}
