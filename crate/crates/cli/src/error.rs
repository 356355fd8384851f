use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("learning failed: {0}")]
    Learning(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Bad input is a config error; anything raised while optimizing is a
/// learning failure.
impl From<sepnet::Error> for CliError {
    fn from(e: sepnet::Error) -> Self {
        use sepnet::Error::*;
        match e {
            Dimension(_) | Partition(_) | Target(_) | InvalidArgument(_) | Capacity { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Learning(e.to_string()),
        }
    }
}
