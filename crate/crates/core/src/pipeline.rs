//! Training runs: abstention training with warm-up and auto-tuned `alpha`,
//! plain cross-entropy baselines, data cleaning and fixed-`alpha` sweeps.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::loss::{cross_entropy_into, log_sum_exp, loss_and_grad_into};
use crate::metrics::{self, AccuracyMode};
use crate::nn::{LrSchedule, Matrix, Mlp, Sgd};
use crate::noise::NoisyDataset;
use crate::schedule::{AlphaScheduler, SchedulerConfig};
use crate::seed;

/// Which samples the cleaner removes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EliminationRule {
    /// Samples the best snapshot abstains on.
    #[default]
    Abstained,
    /// Samples whose renormalized real-class prediction at the best snapshot
    /// disagrees with their training label, abstained or not.
    Misclassified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Abstention-free epochs at the start of a run.
    pub warmup: usize,
    pub rho: f64,
    pub mu: f64,
    pub alpha_final: f64,
    /// Overrides the scheduler after warm-up. `f64::INFINITY` disables the
    /// abstention output entirely (its probability is pinned to 0).
    pub fixed_alpha: Option<f64>,
    pub hidden: Vec<usize>,
    pub initial_lr: f64,
    pub anneal_epochs: Vec<usize>,
    pub anneal_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    pub batch_size: usize,
    pub seed: u64,
    pub elimination: EliminationRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            warmup: 20,
            rho: 64.0,
            mu: 0.05,
            alpha_final: 1.0,
            fixed_alpha: None,
            hidden: vec![64, 64],
            initial_lr: 0.1,
            anneal_epochs: vec![60, 120, 160],
            anneal_factor: 0.5,
            momentum: 0.9,
            weight_decay: 5e-4,
            nesterov: true,
            batch_size: 64,
            seed: 0,
            elimination: EliminationRule::Abstained,
        }
    }
}

impl TrainConfig {
    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            total_epochs: self.epochs,
            warmup_epochs: self.warmup,
            rho: self.rho,
            mu: self.mu,
            alpha_final: self.alpha_final,
        }
    }

    pub fn lr_schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.initial_lr, self.anneal_epochs.clone(), self.anneal_factor)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheduler_config().validate()?;
        self.lr_schedule()?;
        if let Some(a) = self.fixed_alpha {
            if !(a >= 0.0) {
                return Err(Error::Config(format!("fixed alpha must be >= 0, got {a}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Sgd::new(0, self.momentum, self.weight_decay, self.nesterov)?;
        Ok(())
    }

    fn dims(&self, d: usize, outputs: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(d);
        dims.extend_from_slice(&self.hidden);
        dims.push(outputs);
        dims
    }

    /// Same schedule stretched to `epochs`, anneal points scaled in
    /// proportion.
    pub fn lengthened(&self, epochs: usize) -> Self {
        let ratio = epochs as f64 / self.epochs as f64;
        let mut out = self.clone();
        out.epochs = epochs;
        out.warmup = libm::round(self.warmup as f64 * ratio) as usize;
        out.anneal_epochs = self
            .anneal_epochs
            .iter()
            .map(|&e| libm::round(e as f64 * ratio) as usize)
            .collect();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch.
    pub loss: f64,
    /// Abstention rate on the training set at the end of the epoch.
    pub gamma: f64,
    /// Validation accuracy of the renormalized real-class prediction.
    pub val_acc: Option<f64>,
    /// Validation cross-entropy over the real classes.
    pub val_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub lr: f64,
}

/// A model together with the optimizer state and epoch it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub model: Mlp,
    pub optimizer: Sgd,
    pub epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    /// Snapshot at the best validation epoch (abstention phase only).
    pub best: Snapshot,
    /// State after the last epoch.
    pub last: Snapshot,
    pub stats: Vec<EpochStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Objective {
    /// Cross-entropy over every output.
    CrossEntropy,
    /// Cross-entropy over every output of an abstaining network, also
    /// collecting the statistics the alpha scheduler consumes.
    Warmup,
    /// Cross-entropy over the real classes; the abstention output receives
    /// no gradient.
    MaskedCrossEntropy,
    Abstaining(f64),
}

struct StepOutcome {
    loss_sum: f64,
    abst_mass_sum: f64,
    true_ce_sum: f64,
}

fn batch_step(
    model: &Mlp,
    batch: &Matrix,
    labels: &[usize],
    objective: Objective,
) -> Result<(Vec<f64>, StepOutcome)> {
    let trace = model.forward_trace(batch)?;
    let logits = trace.logits();
    let n = labels.len();
    let outputs = model.output_dim();
    let scale = 1.0 / n as f64;
    let mut grads = Matrix::zeros(n, outputs);
    let mut outcome = StepOutcome {
        loss_sum: 0.0,
        abst_mass_sum: 0.0,
        true_ce_sum: 0.0,
    };
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let g = grads.row_mut(i);
        let loss = match objective {
            Objective::CrossEntropy => cross_entropy_into(row, label, g)?,
            Objective::Warmup => {
                let loss = cross_entropy_into(row, label, g)?;
                let k = outputs - 1;
                let lse_real = log_sum_exp(&row[..k]);
                let lse_all = log_sum_exp(row);
                outcome.abst_mass_sum += libm::exp(row[k] - lse_all);
                outcome.true_ce_sum += lse_real - row[label];
                loss
            }
            Objective::MaskedCrossEntropy => {
                let k = outputs - 1;
                let loss = cross_entropy_into(&row[..k], label, &mut g[..k])?;
                g[k] = 0.0;
                loss
            }
            Objective::Abstaining(alpha) => loss_and_grad_into(row, label, alpha, g)?,
        };
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss became {loss}")));
        }
        outcome.loss_sum += loss;
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    let param_grads = model.backward_trace(&trace, &grads)?;
    Ok((param_grads, outcome))
}

fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size)
}

/// Shared epoch loop. `abstaining` selects a `k + 1` output network.
fn run(
    train: &NoisyDataset,
    val: Option<&NoisyDataset>,
    config: &TrainConfig,
    abstaining: bool,
    observer: &mut dyn FnMut(&EpochStats, &Mlp),
) -> Result<TrainRun> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let k = train.k();
    let outputs = if abstaining { k + 1 } else { k };
    let mut model = Mlp::new(&config.dims(train.d(), outputs), seed::derive(config.seed, "init"))?;
    let mut optimizer = Sgd::new(model.num_params(), config.momentum, config.weight_decay, config.nesterov)?;
    let lr_schedule = config.lr_schedule()?;
    let mut scheduler = AlphaScheduler::new(config.scheduler_config())?;
    let disabled = abstaining && config.fixed_alpha == Some(f64::INFINITY);
    let auto_alpha = abstaining && config.fixed_alpha.is_none();
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stats: Vec<EpochStats> = Vec::with_capacity(config.epochs);
    let mut best: Option<((f64, f64), Snapshot)> = None;
    let mut iteration = 0usize;

    for epoch in 0..config.epochs {
        let halt = |cause: Error, stats: &Vec<EpochStats>, model: &Mlp| Error::Halted {
            epoch,
            gamma_at_halt: if abstaining { metrics::abstention_rate(model, train).ok() } else { None },
            cause: Box::new(cause),
            stats: stats.clone(),
        };
        let lr = lr_schedule.lr_at(epoch);
        let in_warmup = epoch < config.warmup;
        let scheduled = if auto_alpha {
            scheduler.epoch_boundary(epoch).map_err(|e| halt(e, &stats, &model))?
        } else {
            None
        };
        let (objective, alpha) = if !abstaining {
            (Objective::CrossEntropy, None)
        } else if disabled {
            (Objective::MaskedCrossEntropy, None)
        } else if in_warmup {
            (Objective::Warmup, None)
        } else {
            let alpha = config.fixed_alpha.or(scheduled).unwrap_or(0.0);
            (Objective::Abstaining(alpha), Some(alpha))
        };

        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for idx in batches(&order, config.batch_size) {
            let batch = train.features().select_rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let (grads, outcome) =
                batch_step(&model, &batch, &labels, objective).map_err(|e| halt(e, &stats, &model))?;
            if auto_alpha && in_warmup {
                let n = idx.len() as f64;
                scheduler
                    .observe_batch(outcome.abst_mass_sum / n, outcome.true_ce_sum / n, iteration, epoch)
                    .map_err(|e| halt(e, &stats, &model))?;
            }
            if let Err(e) = optimizer.step(model.params_mut(), &grads, lr) {
                return Err(halt(e, &stats, &model));
            }
            loss_sum += outcome.loss_sum;
            iteration += 1;
        }

        let gamma = metrics::abstention_rate(&model, train).map_err(|e| halt(e, &stats, &model))?;
        let score = match val {
            Some(v) => metrics::validation_score(&model, v).map_err(|e| halt(e, &stats, &model))?,
            None => None,
        };
        let epoch_stats = EpochStats {
            epoch,
            loss: loss_sum / train.len() as f64,
            gamma,
            val_acc: score.map(|s| s.accuracy),
            val_loss: score.map(|s| s.loss),
            alpha,
            lr,
        };
        observer(&epoch_stats, &model);
        stats.push(epoch_stats);

        let eligible = !abstaining || disabled || !in_warmup;
        if eligible {
            let key = score.map_or((f64::NEG_INFINITY, f64::INFINITY), |s| (s.accuracy, s.loss));
            let better = best.as_ref().map_or(true, |((acc, loss), _)| {
                key.0 > *acc || (key.0 == *acc && key.1 < *loss)
            });
            if better {
                best = Some((
                    key,
                    Snapshot {
                        model: model.clone(),
                        optimizer: optimizer.clone(),
                        epoch,
                    },
                ));
            }
        }
    }

    let last = Snapshot {
        model,
        optimizer,
        epoch: config.epochs - 1,
    };
    let best = best.map_or_else(|| last.clone(), |(_, s)| s);
    Ok(TrainRun { best, last, stats })
}

/// Abstention training: `config.warmup` epochs of ordinary cross-entropy
/// over all `k + 1` outputs (the scheduler watches these), then the
/// abstaining loss with the scheduled or fixed `alpha`. The best snapshot
/// maximizes renormalized validation accuracy over the abstention epochs;
/// ties go to the lower validation cross-entropy, then the earlier epoch.
pub fn train_dac(train: &NoisyDataset, val: &NoisyDataset, config: &TrainConfig) -> Result<TrainRun> {
    train_dac_observed(train, val, config, &mut |_, _| {})
}

/// [`train_dac`] calling `observer` with the stats and model after every
/// epoch.
pub fn train_dac_observed(
    train: &NoisyDataset,
    val: &NoisyDataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats, &Mlp),
) -> Result<TrainRun> {
    check_compatible(train, val)?;
    if val.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    run(train, Some(val), config, true, observer)
}

/// Plain `k`-class cross-entropy training with the same optimizer, schedule
/// and seed handling. `val` only feeds the statistics.
pub fn train_plain(train: &NoisyDataset, val: Option<&NoisyDataset>, config: &TrainConfig) -> Result<TrainRun> {
    train_plain_observed(train, val, config, &mut |_, _| {})
}

pub fn train_plain_observed(
    train: &NoisyDataset,
    val: Option<&NoisyDataset>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats, &Mlp),
) -> Result<TrainRun> {
    if let Some(v) = val {
        check_compatible(train, v)?;
    }
    run(train, val, config, false, observer)
}

fn check_compatible(a: &NoisyDataset, b: &NoisyDataset) -> Result<()> {
    if a.k() != b.k() || a.d() != b.d() {
        return Err(Error::Dimension(format!(
            "datasets disagree: k = {} vs {}, d = {} vs {}",
            a.k(),
            b.k(),
            a.d(),
            b.d()
        )));
    }
    Ok(())
}

pub use crate::metrics::abstention_rate;

/// Sorted indices of training samples to eliminate.
pub fn identify_noisy(model: &Mlp, train: &NoisyDataset, rule: EliminationRule) -> Result<Vec<usize>> {
    let pred = metrics::predict(model, train)?;
    Ok((0..train.len())
        .filter(|&i| match rule {
            EliminationRule::Abstained => pred.abstained[i],
            EliminationRule::Misclassified => pred.class[i] != train.labels()[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport {
    pub eliminated: Vec<usize>,
    pub eliminated_fraction: f64,
    /// Label noise left among retained samples.
    pub residual_noise_fraction: Option<f64>,
    /// Elimination as a detector of samples flagged `randomized`.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl CleanReport {
    pub fn new(train: &NoisyDataset, eliminated: Vec<usize>) -> Self {
        let retained = train.without(&eliminated);
        let mut removed = vec![false; train.len()];
        for &i in &eliminated {
            removed[i] = true;
        }
        let noisy: Vec<bool> = train.flags().iter().map(|f| f.randomized).collect();
        let pr = metrics::detection_pr(&removed, &noisy);
        Self {
            eliminated_fraction: if train.is_empty() {
                0.0
            } else {
                eliminated.len() as f64 / train.len() as f64
            },
            residual_noise_fraction: metrics::residual_noise(retained.labels(), retained.original_labels()),
            precision: pr.precision,
            recall: pr.recall,
            eliminated,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CleanOutcome {
    pub report: CleanReport,
    pub dac: TrainRun,
    pub downstream: TrainRun,
    /// Accuracy of the final downstream model on the evaluation set.
    pub accuracy: f64,
}

/// Plain retraining on `train` minus `eliminated`, with the epoch count
/// lengthened to `ceil(E / retained_fraction)` and the learning-rate
/// schedule stretched to match. Returns the run and its final accuracy on
/// `eval`.
pub fn retrain_without(
    train: &NoisyDataset,
    eliminated: &[usize],
    eval: &NoisyDataset,
    config: &TrainConfig,
) -> Result<(TrainRun, f64)> {
    let retained = train.without(eliminated);
    if retained.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let fraction = retained.len() as f64 / train.len() as f64;
    let epochs = libm::ceil(config.epochs as f64 / fraction) as usize;
    let run = train_plain(&retained, None, &config.lengthened(epochs))?;
    let acc = metrics::accuracy(&run.last.model, eval, AccuracyMode::Overall)?.unwrap_or(0.0);
    Ok((run, acc))
}

/// Train an abstaining model, drop what it abstains on at its best epoch,
/// retrain a plain classifier on the rest and score it on `eval`.
pub fn clean_and_retrain(
    train: &NoisyDataset,
    val: &NoisyDataset,
    eval: &NoisyDataset,
    dac_config: &TrainConfig,
    downstream_config: &TrainConfig,
) -> Result<CleanOutcome> {
    let dac = train_dac(train, val, dac_config)?;
    let eliminated = identify_noisy(&dac.best.model, train, dac_config.elimination)?;
    let report = CleanReport::new(train, eliminated);
    let (downstream, accuracy) = retrain_without(train, &report.eliminated, eval, downstream_config)?;
    Ok(CleanOutcome {
        report,
        dac,
        downstream,
        accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturationBin {
    /// Terminal abstention rate below 0.01.
    Low,
    /// Terminal abstention rate above 0.99.
    High,
    Unresolved,
}

impl SaturationBin {
    pub fn classify(gamma: f64) -> Self {
        if gamma < 0.01 {
            Self::Low
        } else if gamma > 0.99 {
            Self::High
        } else {
            Self::Unresolved
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "saturated-low",
            Self::High => "saturated-high",
            Self::Unresolved => "unresolved",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub val_acc: Vec<Option<f64>>,
    pub terminal: SaturationBin,
    /// Epoch at which the abstention probability hit the saturation guard, ending the run.
    /// The last `gamma` entry is then measured on the model at that moment.
    pub saturated_at: Option<usize>,
}

/// One fixed-`alpha` run of a sweep.
pub fn sweep_one(train: &NoisyDataset, val: &NoisyDataset, config: &TrainConfig, alpha: f64) -> Result<SweepRun> {
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("sweep alpha must be >= 0, got {alpha}")));
    }
    let mut cfg = config.clone();
    cfg.fixed_alpha = Some(alpha);
    let (stats, saturated_at, halt_gamma) = match train_dac(train, val, &cfg) {
        Ok(run) => (run.stats, None, None),
        Err(Error::Halted {
            epoch,
            cause,
            stats,
            gamma_at_halt: Some(g),
        }) if matches!(*cause, Error::AbstentionSaturated { .. }) => (stats, Some(epoch), Some(g)),
        Err(e) => return Err(e),
    };
    let mut gamma: Vec<f64> = stats.iter().map(|s| s.gamma).collect();
    let mut val_acc: Vec<Option<f64>> = stats.iter().map(|s| s.val_acc).collect();
    if let Some(g) = halt_gamma {
        gamma.push(g);
        val_acc.push(None);
    }
    let terminal = SaturationBin::classify(gamma.last().copied().unwrap_or(0.0));
    Ok(SweepRun {
        alpha,
        val_acc,
        gamma,
        terminal,
        saturated_at,
    })
}

/// Fixed-`alpha` runs, one per entry of `alphas`, in order.
pub fn fixed_alpha_sweep(
    train: &NoisyDataset,
    val: &NoisyDataset,
    config: &TrainConfig,
    alphas: &[f64],
) -> Result<Vec<SweepRun>> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("no alphas to sweep".into()));
    }
    alphas.iter().map(|&a| sweep_one(train, val, config, a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::gen_blobs;

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 6,
            warmup: 2,
            hidden: vec![8],
            anneal_epochs: vec![4],
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn stats_recorded_every_epoch() {
        let train = gen_blobs(3, 2, 30, 8.0, 1).unwrap();
        let val = gen_blobs(3, 2, 10, 8.0, 2).unwrap();
        let run = train_dac(&train, &val, &small_config()).unwrap();
        assert_eq!(run.stats.len(), 6);
        for (e, s) in run.stats.iter().enumerate() {
            assert_eq!(s.epoch, e);
            assert!((0.0..=1.0).contains(&s.gamma));
            assert_eq!(s.alpha.is_some(), e >= 2);
        }
        assert!(run.best.epoch >= 2);
        assert_eq!(run.last.epoch, 5);
    }

    #[test]
    fn rejects_bad_configuration() {
        let train = gen_blobs(3, 2, 5, 8.0, 1).unwrap();
        let mut cfg = small_config();
        cfg.warmup = 6;
        assert!(matches!(train_dac(&train, &train, &cfg), Err(Error::Config(_))));
        let mut cfg = small_config();
        cfg.fixed_alpha = Some(-1.0);
        assert!(train_dac(&train, &train, &cfg).is_err());
        let other = gen_blobs(4, 2, 5, 8.0, 1).unwrap();
        assert!(matches!(train_dac(&train, &other, &small_config()), Err(Error::Dimension(_))));
    }

    #[test]
    fn never_abstaining_model_eliminates_nothing() {
        let train = gen_blobs(3, 2, 20, 8.0, 1).unwrap();
        let mut model = Mlp::new(&[2, 4], 0).unwrap();
        model.layer_mut(0).1[3] = -1e9;
        assert!(identify_noisy(&model, &train, EliminationRule::Abstained).unwrap().is_empty());
        model.layer_mut(0).1[3] = 1e9;
        let all = identify_noisy(&model, &train, EliminationRule::Abstained).unwrap();
        assert_eq!(all, (0..train.len()).collect::<Vec<_>>());
    }

    #[test]
    fn eliminating_everything_is_an_error() {
        let train = gen_blobs(3, 2, 5, 8.0, 1).unwrap();
        let all: Vec<usize> = (0..train.len()).collect();
        assert_eq!(
            retrain_without(&train, &all, &train, &small_config()).unwrap_err(),
            Error::EmptyTrainingSet
        );
    }

    #[test]
    fn clean_report_accounting() {
        let train = gen_blobs(3, 2, 10, 8.0, 1).unwrap();
        let noisy = crate::noise::inject_uniform(&train, 0.5, 3).unwrap();
        let flagged: Vec<usize> = (0..noisy.len()).filter(|&i| noisy.flags()[i].randomized).collect();
        let r = CleanReport::new(&noisy, flagged.clone());
        assert_eq!(r.precision, Some(1.0));
        assert_eq!(r.recall, Some(1.0));
        assert_eq!(r.residual_noise_fraction, Some(0.0));
        assert_eq!(r.eliminated_fraction, flagged.len() as f64 / 30.0);
    }

    #[test]
    fn saturation_bins() {
        assert_eq!(SaturationBin::classify(0.0), SaturationBin::Low);
        assert_eq!(SaturationBin::classify(0.995), SaturationBin::High);
        assert_eq!(SaturationBin::classify(0.5), SaturationBin::Unresolved);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let train = gen_blobs(3, 2, 5, 8.0, 1).unwrap();
        assert!(fixed_alpha_sweep(&train, &train, &small_config(), &[]).is_err());
    }
}
