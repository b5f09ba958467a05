//! Abstention-based training for multi-class classifiers.
//!
//! A classifier over `k` real classes gets one extra output, the abstention
//! class, and is trained with a cross-entropy variant that lets it move
//! probability mass onto abstention at a tunable cost `alpha`. Samples the
//! trained model abstains on can then be removed from the training set.
//!
//! Class indices are zero-based throughout: real classes are `0..k` and the
//! abstention output sits at index `k`.
//!
//! The crate is `no_std` with `alloc`; file formats and the command-line
//! front end live in the companion `dac` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod pipeline;
pub mod schedule;
pub mod seed;

pub use error::{Error, Result};
pub use loss::{AbstentionPenalty, LogitVector, ProbVector};
pub use nn::{LrSchedule, Matrix, Mlp, Sgd};
pub use noise::{NoiseFlags, NoiseSpec, NoisyDataset};
pub use pipeline::{CleanReport, EpochStats, TrainConfig};
pub use schedule::{AlphaScheduler, SchedulerConfig};
