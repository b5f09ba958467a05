use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Step decay: the rate is multiplied by `anneal_factor` at each listed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    initial_lr: f64,
    anneal_epochs: Vec<usize>,
    anneal_factor: f64,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, mut anneal_epochs: Vec<usize>, anneal_factor: f64) -> Result<Self> {
        if !(initial_lr > 0.0 && initial_lr.is_finite()) {
            return Err(Error::Config(format!("initial lr must be positive, got {initial_lr}")));
        }
        if !(anneal_factor > 0.0 && anneal_factor < 1.0) {
            return Err(Error::Config(format!(
                "anneal factor must lie in (0, 1), got {anneal_factor}"
            )));
        }
        anneal_epochs.sort_unstable();
        Ok(Self {
            initial_lr,
            anneal_epochs,
            anneal_factor,
        })
    }

    pub fn initial_lr(&self) -> f64 {
        self.initial_lr
    }

    pub fn anneal_epochs(&self) -> &[usize] {
        &self.anneal_epochs
    }

    pub fn anneal_factor(&self) -> f64 {
        self.anneal_factor
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = self.anneal_epochs.iter().take_while(|&&e| e <= epoch).count();
        self.initial_lr * libm::pow(self.anneal_factor, steps as f64)
    }

    /// Same schedule with every anneal epoch multiplied by `factor` (rounded).
    pub fn stretched(&self, factor: f64) -> Self {
        Self {
            initial_lr: self.initial_lr,
            anneal_epochs: self
                .anneal_epochs
                .iter()
                .map(|&e| libm::round(e as f64 * factor) as usize)
                .collect(),
            anneal_factor: self.anneal_factor,
        }
    }
}
