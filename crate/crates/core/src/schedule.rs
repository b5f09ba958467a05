//! Automatic tuning of the abstention penalty `alpha`.
//!
//! During the warm-up epochs every mini-batch contributes
//! `beta = (1 - mean p_a) * mean normalized cross-entropy` to an exponential
//! moving average `beta_tilde`. At the first abstention epoch `alpha` is set
//! to `beta_tilde / rho`, well under the typical per-sample threshold, and
//! then moves linearly towards `alpha_final`, one step per epoch.

use alloc::format;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    /// Initialization factor: `alpha = beta_tilde / rho`.
    pub rho: f64,
    /// Moving-average rate.
    pub mu: f64,
    pub alpha_final: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            total_epochs: 200,
            warmup_epochs: 20,
            rho: 64.0,
            mu: 0.05,
            alpha_final: 1.0,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::Config("total_epochs must be positive".into()));
        }
        if self.warmup_epochs >= self.total_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be below total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::Config(format!("mu must lie in (0, 1], got {}", self.mu)));
        }
        if !(self.alpha_final >= 0.0 && self.alpha_final.is_finite()) {
            return Err(Error::Config(format!(
                "alpha_final must be finite and >= 0, got {}",
                self.alpha_final
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaScheduler {
    config: SchedulerConfig,
    beta_tilde: f64,
    alpha: Option<f64>,
    delta_alpha: f64,
    update_epoch: usize,
    last_epoch: Option<usize>,
}

impl AlphaScheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            beta_tilde: 0.0,
            alpha: None,
            delta_alpha: 0.0,
            update_epoch: 0,
            last_epoch: None,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn beta_tilde(&self) -> f64 {
        self.beta_tilde
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn delta_alpha(&self) -> f64 {
        self.delta_alpha
    }

    pub fn alpha_set(&self) -> bool {
        self.alpha.is_some()
    }

    pub fn update_epoch(&self) -> usize {
        self.update_epoch
    }

    /// Feeds one warm-up mini-batch. `batch_abst_mass` is the batch mean of
    /// `p_a`; `batch_true_ce` the batch mean of `-ln(p_j / (1 - p_a))`.
    /// `iteration` counts mini-batches from 0 across the whole run.
    ///
    /// Returns the batch `beta`.
    pub fn observe_batch(
        &mut self,
        batch_abst_mass: f64,
        batch_true_ce: f64,
        iteration: usize,
        epoch: usize,
    ) -> Result<f64> {
        if epoch >= self.config.warmup_epochs {
            return Err(Error::SchedulerPhase {
                epoch,
                warmup: self.config.warmup_epochs,
            });
        }
        if !(0.0..=1.0).contains(&batch_abst_mass) {
            return Err(Error::InvalidInput(format!(
                "batch abstention mass {batch_abst_mass} outside [0, 1]"
            )));
        }
        if !(batch_true_ce >= 0.0 && batch_true_ce.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "batch cross-entropy must be finite and >= 0, got {batch_true_ce}"
            )));
        }
        let beta = (1.0 - batch_abst_mass) * batch_true_ce;
        if iteration == 0 {
            self.beta_tilde = beta;
        }
        let mu = self.config.mu;
        self.beta_tilde = (1.0 - mu) * self.beta_tilde + mu * beta;
        Ok(beta)
    }

    /// Advances to `epoch` and returns the `alpha` to train it with (`None`
    /// during warm-up). Calling again within the same epoch is a no-op.
    pub fn epoch_boundary(&mut self, epoch: usize) -> Result<Option<f64>> {
        if let Some(last) = self.last_epoch {
            if epoch < last {
                return Err(Error::Sequencing { epoch, last });
            }
        }
        self.last_epoch = Some(epoch);
        let warmup = self.config.warmup_epochs;
        if epoch < warmup {
            return Ok(None);
        }
        if self.alpha.is_none() {
            let alpha = self.beta_tilde / self.config.rho;
            self.delta_alpha =
                (self.config.alpha_final - alpha) / (self.config.total_epochs - warmup) as f64;
            self.update_epoch = warmup;
            self.alpha = Some(alpha);
        }
        if epoch > self.update_epoch {
            // alpha is always Some here
            let alpha = self.alpha.unwrap_or_default() + self.delta_alpha;
            self.alpha = Some(alpha.max(0.0));
            self.update_epoch = epoch;
        }
        Ok(self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(e: usize, l: usize, rho: f64, mu: f64, alpha_final: f64) -> SchedulerConfig {
        SchedulerConfig {
            total_epochs: e,
            warmup_epochs: l,
            rho,
            mu,
            alpha_final,
        }
    }

    #[test]
    fn new_examples() {
        let s = AlphaScheduler::new(SchedulerConfig::default()).unwrap();
        assert_eq!(s.alpha(), None);
        assert!(!s.alpha_set());
        assert_eq!(s.beta_tilde(), 0.0);
        assert!(AlphaScheduler::new(cfg(2, 0, 1.0, 1.0, 0.0)).is_ok());
        assert!(matches!(
            AlphaScheduler::new(cfg(10, 10, 64.0, 0.05, 1.0)),
            Err(Error::Config(_))
        ));
        assert!(AlphaScheduler::new(cfg(10, 2, 0.0, 0.05, 1.0)).is_err());
        assert!(AlphaScheduler::new(cfg(10, 2, 64.0, 0.0, 1.0)).is_err());
        assert!(AlphaScheduler::new(cfg(10, 2, 64.0, 1.5, 1.0)).is_err());
        assert!(AlphaScheduler::new(cfg(10, 2, 64.0, 0.5, -1.0)).is_err());
    }

    #[test]
    fn moving_average_update() {
        let mut s = AlphaScheduler::new(cfg(10, 5, 64.0, 0.05, 1.0)).unwrap();
        s.observe_batch(0.0, 1.0, 0, 0).unwrap();
        assert_eq!(s.beta_tilde(), 1.0);
        let beta = s.observe_batch(0.0, 3.0, 1, 0).unwrap();
        assert_eq!(beta, 3.0);
        assert!((s.beta_tilde() - 1.10).abs() < 1e-15);
    }

    #[test]
    fn first_iteration_initializes() {
        let mut s = AlphaScheduler::new(cfg(10, 5, 64.0, 0.05, 1.0)).unwrap();
        s.observe_batch(0.5, 5.0, 0, 0).unwrap();
        assert_eq!(s.beta_tilde(), 2.5);
    }

    #[test]
    fn full_replacement_with_unit_rate() {
        let mut s = AlphaScheduler::new(cfg(10, 5, 64.0, 1.0, 1.0)).unwrap();
        s.observe_batch(0.0, 4.0, 0, 0).unwrap();
        s.observe_batch(0.3, 1.0, 1, 0).unwrap();
        assert!((s.beta_tilde() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn observe_outside_warmup_is_rejected() {
        let mut s = AlphaScheduler::new(cfg(10, 2, 64.0, 0.05, 1.0)).unwrap();
        assert_eq!(
            s.observe_batch(0.1, 1.0, 0, 2),
            Err(Error::SchedulerPhase { epoch: 2, warmup: 2 })
        );
        assert!(s.observe_batch(1.5, 1.0, 0, 0).is_err());
        assert!(s.observe_batch(0.5, -1.0, 0, 0).is_err());
    }

    #[test]
    fn initialization_and_ramp() {
        let mut s = AlphaScheduler::new(cfg(200, 20, 64.0, 1.0, 1.0)).unwrap();
        for e in 0..20 {
            assert_eq!(s.epoch_boundary(e).unwrap(), None);
        }
        s.observe_batch(0.0, 6.4, 0, 19).unwrap();
        let a = s.epoch_boundary(20).unwrap().unwrap();
        assert!((a - 0.1).abs() < 1e-15);
        assert!((s.delta_alpha() - 0.005).abs() < 1e-15);
        let a = s.epoch_boundary(21).unwrap().unwrap();
        assert!((a - 0.105).abs() < 1e-12);
    }

    #[test]
    fn repeated_boundary_does_not_reincrement() {
        let mut s = AlphaScheduler::new(cfg(10, 2, 1.0, 1.0, 2.0)).unwrap();
        s.observe_batch(0.0, 1.0, 0, 0).unwrap();
        s.epoch_boundary(2).unwrap();
        let a = s.epoch_boundary(3).unwrap();
        assert_eq!(s.epoch_boundary(3).unwrap(), a);
        assert_eq!(s.epoch_boundary(3).unwrap(), a);
        assert_eq!(
            s.epoch_boundary(1),
            Err(Error::Sequencing { epoch: 1, last: 3 })
        );
    }

    #[test]
    fn no_warmup_starts_at_zero() {
        let mut s = AlphaScheduler::new(cfg(2, 0, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(s.epoch_boundary(0).unwrap(), Some(0.0));
        assert_eq!(s.epoch_boundary(1).unwrap(), Some(0.0));
    }

    #[test]
    fn decreasing_ramp_is_clamped_at_zero() {
        let mut s = AlphaScheduler::new(cfg(4, 1, 1.0, 1.0, 0.0)).unwrap();
        s.observe_batch(0.0, 3.0, 0, 0).unwrap();
        assert_eq!(s.epoch_boundary(1).unwrap(), Some(3.0));
        assert!((s.delta_alpha() + 1.0).abs() < 1e-15);
        assert_eq!(s.epoch_boundary(2).unwrap(), Some(2.0));
        assert_eq!(s.epoch_boundary(3).unwrap(), Some(1.0));
        assert_eq!(s.epoch_boundary(4).unwrap(), Some(0.0));
        assert_eq!(s.epoch_boundary(5).unwrap(), Some(0.0));
    }
}
