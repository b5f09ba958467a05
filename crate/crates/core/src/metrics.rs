//! Evaluation of abstaining and plain classifiers.
//!
//! A model whose output width is `k + 1` for a `k`-class dataset is treated
//! as abstaining (last output = abstention); width `k` is a plain
//! classifier that never abstains. Absent values are `None`, never 0.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::{log_sum_exp, softmax_into};
use crate::nn::{Matrix, Mlp};
use crate::noise::NoisyDataset;

/// Per-sample decisions of a model on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// Argmax over all outputs landed on the abstention unit.
    pub abstained: Vec<bool>,
    /// Argmax over the real classes only.
    pub class: Vec<usize>,
    /// Real-class probabilities with the abstention mass renormalized out
    /// (`n x k`).
    pub class_probs: Matrix,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Whether `model` carries an abstention unit for `k` classes.
pub fn has_abstention(model: &Mlp, k: usize) -> Result<bool> {
    match model.output_dim() {
        o if o == k + 1 => Ok(true),
        o if o == k => Ok(false),
        o => Err(Error::Dimension(format!(
            "model has {o} outputs, dataset has {k} classes"
        ))),
    }
}

pub fn predict(model: &Mlp, ds: &NoisyDataset) -> Result<Predictions> {
    let k = ds.k();
    let abstains = has_abstention(model, k)?;
    if model.input_dim() != ds.d() {
        return Err(Error::Dimension(format!(
            "model expects {} features, dataset has {}",
            model.input_dim(),
            ds.d()
        )));
    }
    let logits = model.forward(ds.features())?;
    let n = ds.len();
    let mut abstained = Vec::with_capacity(n);
    let mut class = Vec::with_capacity(n);
    let mut class_probs = Matrix::zeros(n, k);
    for i in 0..n {
        let row = logits.row(i);
        abstained.push(abstains && argmax(row) == k);
        // softmax over the real logits equals the renormalized probabilities
        softmax_into(&row[..k], class_probs.row_mut(i));
        class.push(argmax(&row[..k]));
    }
    Ok(Predictions {
        abstained,
        class,
        class_probs,
    })
}

/// Fraction of samples on which the model abstains; 0 for an empty set.
pub fn abstention_rate(model: &Mlp, ds: &NoisyDataset) -> Result<f64> {
    let pred = predict(model, ds)?;
    Ok(rate(&pred.abstained))
}

fn rate(hits: &[bool]) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbstentionPr {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Precision and recall of `predicted` as a detector of `actual`.
pub fn detection_pr(predicted: &[bool], actual: &[bool]) -> AbstentionPr {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    AbstentionPr {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}

/// Abstention treated as a detector of samples with a structured feature.
pub fn abstention_pr(model: &Mlp, ds: &NoisyDataset) -> Result<AbstentionPr> {
    let pred = predict(model, ds)?;
    let positives: Vec<bool> = ds.flags().iter().map(|f| f.structured_feature).collect();
    Ok(detection_pr(&pred.abstained, &positives))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskCoveragePoint {
    pub threshold: f64,
    pub coverage: f64,
    /// Error rate among covered samples; `None` when nothing is covered.
    pub risk: Option<f64>,
}

/// 101 evenly spaced thresholds on `[0, 1]`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Softmax-threshold selective prediction: a sample is covered when its
/// winning class probability is at least the threshold.
pub fn risk_coverage(probs: &Matrix, labels: &[usize], thresholds: &[f64]) -> Result<Vec<RiskCoveragePoint>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("no thresholds given".into()));
    }
    if probs.rows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let n = labels.len();
    let scored: Vec<(f64, bool)> = probs
        .iter_rows()
        .zip(labels)
        .map(|(row, &label)| {
            let winner = argmax(row);
            (row[winner], winner == label)
        })
        .collect();
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let (mut covered, mut wrong) = (0usize, 0usize);
            for &(confidence, correct) in &scored {
                if confidence >= threshold {
                    covered += 1;
                    wrong += usize::from(!correct);
                }
            }
            RiskCoveragePoint {
                threshold,
                coverage: if n == 0 { 0.0 } else { covered as f64 / n as f64 },
                risk: (covered > 0).then(|| wrong as f64 / covered as f64),
            }
        })
        .collect())
}

/// Fraction of retained samples whose label differs from the original.
pub fn residual_noise(labels: &[usize], original_labels: &[usize]) -> Option<f64> {
    if labels.is_empty() {
        return None;
    }
    let wrong = labels
        .iter()
        .zip(original_labels)
        .filter(|(a, b)| a != b)
        .count();
    Some(wrong as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyMode {
    /// Every sample counts; an abstention is an error.
    Overall,
    /// Only samples the model did not abstain on.
    NonAbstainedOnly,
    /// Argmax over the real classes, every sample counts.
    Renormalized,
}

/// Accuracy against the dataset's current labels.
pub fn accuracy(model: &Mlp, ds: &NoisyDataset, mode: AccuracyMode) -> Result<Option<f64>> {
    let pred = predict(model, ds)?;
    Ok(accuracy_of(&pred, ds.labels(), mode))
}

pub fn accuracy_of(pred: &Predictions, labels: &[usize], mode: AccuracyMode) -> Option<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for ((&abstained, &class), &label) in pred.abstained.iter().zip(&pred.class).zip(labels) {
        match mode {
            AccuracyMode::Overall => {
                total += 1;
                correct += usize::from(!abstained && class == label);
            }
            AccuracyMode::NonAbstainedOnly => {
                if !abstained {
                    total += 1;
                    correct += usize::from(class == label);
                }
            }
            AccuracyMode::Renormalized => {
                total += 1;
                correct += usize::from(class == label);
            }
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

/// Renormalized real-class accuracy and mean cross-entropy over the real
/// classes, from one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationScore {
    pub accuracy: f64,
    pub loss: f64,
}

/// `None` for an empty dataset.
pub fn validation_score(model: &Mlp, ds: &NoisyDataset) -> Result<Option<ValidationScore>> {
    let k = ds.k();
    has_abstention(model, k)?;
    if model.input_dim() != ds.d() {
        return Err(Error::Dimension(format!(
            "model expects {} features, dataset has {}",
            model.input_dim(),
            ds.d()
        )));
    }
    if ds.is_empty() {
        return Ok(None);
    }
    let logits = model.forward(ds.features())?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (i, &label) in ds.labels().iter().enumerate() {
        let real = &logits.row(i)[..k];
        correct += usize::from(argmax(real) == label);
        loss += log_sum_exp(real) - real[label];
    }
    let n = ds.len() as f64;
    Ok(Some(ValidationScore {
        accuracy: correct as f64 / n,
        loss: loss / n,
    }))
}
