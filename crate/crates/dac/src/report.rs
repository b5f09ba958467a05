//! CSV and JSON output schemas.
//!
//! Absent values are written as `null` in both formats, never as 0.
//!
//! | file | columns / fields |
//! |------|------------------|
//! | stats CSV | `epoch,loss,gamma,val_acc,alpha,lr` |
//! | sweep trajectory CSV | `epoch,gamma,val_acc` |
//! | risk-coverage CSV | `threshold,coverage,risk` |
//! | JSON reports | [`CleanSummary`], [`SweepSummary`], [`EvalSummary`], [`DatasetSidecar`] |

use std::fmt::Write as _;
use std::io::{self, Write};

use dac_core::metrics::{AbstentionPr, RiskCoveragePoint};
use dac_core::pipeline::{CleanOutcome, EpochStats, SweepRun};
use serde::Serialize;

/// Schema version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

pub const STATS_HEADER: &str = "epoch,loss,gamma,val_acc,alpha,lr";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| x.to_string())
}

pub fn stats_row(s: &EpochStats) -> String {
    format!(
        "{},{},{},{},{},{}",
        s.epoch,
        s.loss,
        s.gamma,
        opt(s.val_acc),
        opt(s.alpha),
        s.lr
    )
}

/// Append-only stats CSV; every row is flushed as it is written so a halted
/// run leaves the epochs it finished on disk.
pub struct StatsWriter<W: Write> {
    out: W,
}

impl<W: Write> StatsWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{STATS_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, s: &EpochStats) -> io::Result<()> {
        writeln!(self.out, "{}", stats_row(s))?;
        self.out.flush()
    }
}

pub fn stats_csv(stats: &[EpochStats]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for s in stats {
        let _ = writeln!(out, "{}", stats_row(s));
    }
    out
}

pub fn sweep_csv(run: &SweepRun) -> String {
    let mut out = String::from("epoch,gamma,val_acc\n");
    for (epoch, (g, v)) in run.gamma.iter().zip(&run.val_acc).enumerate() {
        let _ = writeln!(out, "{epoch},{g},{}", opt(*v));
    }
    out
}

pub fn risk_coverage_csv(points: &[RiskCoveragePoint]) -> String {
    let mut out = String::from("threshold,coverage,risk\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.coverage, opt(p.risk));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSidecar {
    pub schema_version: u32,
    pub split: String,
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub n_per_class: usize,
    pub separation: f64,
    pub run_seed: u64,
    pub blob_seed: u64,
    pub noise_kind: String,
    pub noise_seed: u64,
    pub fraction: Option<f64>,
    pub eta: Option<f64>,
    pub magnitude: Option<f64>,
    pub width: Option<usize>,
    pub blend: Option<f64>,
    pub class: Option<usize>,
    pub randomized: usize,
    pub structured: usize,
    pub description: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CleanSummary {
    pub schema_version: u32,
    pub n_train: usize,
    pub eliminated: usize,
    pub eliminated_fraction: f64,
    pub residual_noise_fraction: Option<f64>,
    /// `removed/residual`, both to two decimals.
    pub removed_residual: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub elimination_rule: String,
    pub dac_best_epoch: usize,
    pub downstream_epochs: usize,
    pub downstream_accuracy: f64,
    pub eliminated_indices: Vec<usize>,
}

impl CleanSummary {
    pub fn new(outcome: &CleanOutcome, n_train: usize, rule: &str) -> Self {
        let r = &outcome.report;
        Self {
            schema_version: SCHEMA_VERSION,
            n_train,
            eliminated: r.eliminated.len(),
            eliminated_fraction: r.eliminated_fraction,
            residual_noise_fraction: r.residual_noise_fraction,
            removed_residual: format!(
                "{:.2}/{}",
                r.eliminated_fraction,
                r.residual_noise_fraction.map_or_else(|| "null".to_string(), |v| format!("{v:.2}"))
            ),
            precision: r.precision,
            recall: r.recall,
            elimination_rule: rule.to_string(),
            dac_best_epoch: outcome.dac.best.epoch,
            downstream_epochs: outcome.downstream.stats.len(),
            downstream_accuracy: outcome.accuracy,
            eliminated_indices: r.eliminated.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub alpha: f64,
    pub file: String,
    pub terminal_gamma: Option<f64>,
    pub terminal_bin: String,
    /// Epoch in which the run stopped at the abstention saturation guard.
    pub saturated_at_epoch: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub runs: Vec<SweepEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrSummary {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl From<&AbstentionPr> for PrSummary {
    fn from(pr: &AbstentionPr) -> Self {
        Self {
            precision: pr.precision,
            recall: pr.recall,
            true_positives: pr.true_positives,
            false_positives: pr.false_positives,
            false_negatives: pr.false_negatives,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub n: usize,
    pub k: usize,
    pub has_abstention: bool,
    pub checkpoint_epoch: usize,
    pub abstention_rate: f64,
    /// Abstention as a detector of samples with a structured feature.
    pub abstention_pr: PrSummary,
    pub accuracy_overall: Option<f64>,
    pub accuracy_non_abstained: Option<f64>,
    pub accuracy_renormalized: Option<f64>,
    /// Accuracies against the original (pre-noise) labels.
    pub clean_accuracy_overall: Option<f64>,
    pub clean_accuracy_renormalized: Option<f64>,
    pub risk_coverage_file: String,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    // the report structs hold only plain data, which always serializes
    let mut s = serde_json::to_string_pretty(value).unwrap_or_default();
    s.push('\n');
    s
}
