//! Dataset and checkpoint files, experiment configuration, report output and
//! the `dac` command line, on top of [`dac_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod report;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use format::{Checkpoint, FormatError};
