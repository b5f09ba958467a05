use std::path::PathBuf;

use crate::config::ConfigError;
use crate::format::FormatError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const FORMAT: i32 = 5;
    pub const DIMENSION: i32 = 6;
    pub const EMPTY_TRAINING_SET: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Core(#[from] dac_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use dac_core::Error as E;
        match self {
            Self::Usage(_) | Self::Config(_) => exit::USAGE,
            Self::Io { .. } => exit::IO,
            Self::Format { .. } => exit::FORMAT,
            Self::Core(e) => match e {
                E::Dimension(_) => exit::DIMENSION,
                E::EmptyTrainingSet => exit::EMPTY_TRAINING_SET,
                E::Config(_) | E::InvalidInput(_) | E::InvalidTarget { .. } => exit::USAGE,
                E::Numeric(_)
                | E::AbstentionSaturated { .. }
                | E::Halted { .. }
                | E::SchedulerPhase { .. }
                | E::Sequencing { .. } => exit::NUMERIC,
            },
        }
    }
}
