use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::pipeline::EpochStats;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("abstention probability saturated (1 - p_abstain = {one_minus_abstention:e})")]
    AbstentionSaturated { one_minus_abstention: f64 },

    #[error("invalid target class {class} for {k} real classes")]
    InvalidTarget { class: usize, k: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scheduler observed a batch at epoch {epoch}, outside the warm-up window (< {warmup})")]
    SchedulerPhase { epoch: usize, warmup: usize },

    #[error("epoch {epoch} presented after epoch {last}")]
    Sequencing { epoch: usize, last: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training halted at epoch {epoch}: {cause}")]
    Halted {
        epoch: usize,
        cause: Box<Error>,
        stats: Vec<EpochStats>,
        /// Abstention rate on the training set of the model as it stood when the run stopped.
        gamma_at_halt: Option<f64>,
    },

    #[error("no training samples left after cleaning")]
    EmptyTrainingSet,
}
