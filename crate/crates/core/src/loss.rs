//! The abstention-aware cross-entropy loss and its closed-form gradients.
//!
//! For `k` real classes with probabilities `p_0..p_{k-1}`, an abstention
//! probability `p_a = p_k`, one-hot target `j` and penalty `alpha >= 0`:
//!
//! ```text
//! L = (1 - p_a) * -ln(p_j / (1 - p_a)) + alpha * ln(1 / (1 - p_a))
//! ```
//!
//! With `p_a = 0` this is the ordinary cross-entropy. All arithmetic is `f64`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Loss and gradient evaluation reject `p_a >= 1 - ABSTENTION_EPS`.
pub const ABSTENTION_EPS: f64 = 1e-12;

const SUM_TOLERANCE: f64 = 1e-9;

/// Probabilities over `k` real classes followed by the abstention class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "probability vector needs k >= 2 real classes plus abstention, got length {}",
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("probability {bad} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Number of real classes.
    pub fn k(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn abstention(&self) -> f64 {
        self.probs[self.k()]
    }

    pub fn real(&self) -> &[f64] {
        &self.probs[..self.k()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    fn check_target(&self, class: usize) -> Result<()> {
        check_target(class, self.k())
    }

    /// Mass on the real classes other than `class`, summed directly rather
    /// than as `1 - p_class - p_a`.
    fn rest_mass(&self, class: usize) -> f64 {
        self.real()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != class)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Pre-activations feeding the softmax, abstention last.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    logits: Vec<f64>,
}

impl LogitVector {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "logit vector needs k >= 2 real classes plus abstention, got length {}",
                logits.len()
            )));
        }
        check_finite(&logits)?;
        Ok(Self { logits })
    }

    pub fn k(&self) -> usize {
        self.logits.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.logits
    }
}

/// The abstention penalty `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AbstentionPenalty(f64);

impl AbstentionPenalty {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidInput(format!(
                "abstention penalty must be finite and >= 0, got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::InvalidInput(format!("non-finite value {v}"))),
        None => Ok(()),
    }
}

fn check_target(class: usize, k: usize) -> Result<()> {
    if class >= k {
        return Err(Error::InvalidTarget { class, k });
    }
    Ok(())
}

fn check_saturation(one_minus_abstention: f64) -> Result<()> {
    if one_minus_abstention <= ABSTENTION_EPS {
        return Err(Error::AbstentionSaturated {
            one_minus_abstention,
        });
    }
    Ok(())
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}

/// Max-subtracted softmax into `out`. Input must be finite.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &a) in out.iter_mut().zip(logits) {
        *o = libm::exp(a - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &LogitVector) -> ProbVector {
    let mut probs = vec![0.0; logits.logits.len()];
    softmax_into(&logits.logits, &mut probs);
    ProbVector { probs }
}

/// Loss for probability vector `p` and zero-based real target class.
///
/// Returns `+inf` when the target class has zero probability.
pub fn dac_loss(p: &ProbVector, true_class: usize, alpha: AbstentionPenalty) -> Result<f64> {
    p.check_target(true_class)?;
    let one_minus = 1.0 - p.abstention();
    check_saturation(one_minus)?;
    let p_j = p.real()[true_class];
    let normalized_ce = if p_j == 0.0 {
        f64::INFINITY
    } else {
        -libm::log(p_j / one_minus)
    };
    Ok(one_minus * normalized_ce + alpha.0 * -libm::log(one_minus))
}

/// Closed-form `dL/da_j` for the true class `j`.
///
/// Non-positive for every `alpha >= 0`. At `p_j = 0` the `p_j * ln(.../p_j)`
/// term takes its limit 0.
pub fn true_class_grad(p: &ProbVector, true_class: usize, alpha: AbstentionPenalty) -> Result<f64> {
    p.check_target(true_class)?;
    let p_a = p.abstention();
    let one_minus = 1.0 - p_a;
    check_saturation(one_minus)?;
    let p_j = p.real()[true_class];
    let rest = p.rest_mass(true_class);
    // ln((1 - p_a) / p_j) = ln(1 + rest / p_j)
    let log_term = if p_j == 0.0 {
        0.0
    } else {
        p_a * p_j * libm::log1p(rest / p_j)
    };
    Ok(-rest + log_term - alpha.0 * p_a * p_j / one_minus)
}

/// The value of `alpha` below which gradient descent grows the abstention
/// pre-activation for this sample: `(1 - p_a) * -ln(p_j / (1 - p_a))`.
///
/// Unbounded (`+inf`) when `p_j = 0`.
pub fn alpha_threshold(p: &ProbVector, true_class: usize) -> Result<f64> {
    p.check_target(true_class)?;
    let p_j = p.real()[true_class];
    if p_j == 0.0 {
        return Ok(f64::INFINITY);
    }
    let one_minus = 1.0 - p.abstention();
    Ok(one_minus * libm::log1p(p.rest_mass(true_class) / p_j))
}

/// Real-class probabilities with the abstention mass renormalized out.
pub fn normalized_true_probs(p: &ProbVector) -> Result<Vec<f64>> {
    let one_minus = 1.0 - p.abstention();
    if one_minus <= 0.0 {
        return Err(Error::AbstentionSaturated {
            one_minus_abstention: one_minus,
        });
    }
    Ok(p.real().iter().map(|x| x / one_minus).collect())
}

/// Gradient of the loss with respect to all `k + 1` pre-activations.
pub fn dac_loss_grad(
    logits: &LogitVector,
    true_class: usize,
    alpha: AbstentionPenalty,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; logits.logits.len()];
    loss_and_grad_into(&logits.logits, true_class, alpha.0, &mut grad)?;
    Ok(grad)
}

/// Loss evaluated directly from logits.
pub fn dac_loss_from_logits(
    logits: &LogitVector,
    true_class: usize,
    alpha: AbstentionPenalty,
) -> Result<f64> {
    let mut scratch = vec![0.0; logits.logits.len()];
    loss_and_grad_into(&logits.logits, true_class, alpha.0, &mut scratch)
}

/// Loss and gradient from raw logits, writing the gradient into `grad`.
///
/// Works in log space: with `lse_real` the log-sum-exp over the real logits,
/// the normalized cross-entropy is `lse_real - a_j` and
/// `-ln(1 - p_a) = lse_all - lse_real`. Assumes finite logits and
/// `grad.len() == logits.len()`.
pub(crate) fn loss_and_grad_into(
    logits: &[f64],
    true_class: usize,
    alpha: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let k = logits.len() - 1;
    check_target(true_class, k)?;
    let lse_real = log_sum_exp(&logits[..k]);
    let lse_all = log_sum_exp(logits);
    let one_minus = libm::exp(lse_real - lse_all);
    check_saturation(one_minus)?;
    let p_a = libm::exp(logits[k] - lse_all);
    let normalized_ce = lse_real - logits[true_class];
    let neg_log_one_minus = lse_all - lse_real;
    let loss = one_minus * normalized_ce + alpha * neg_log_one_minus;

    let penalty_ratio = alpha * p_a / one_minus;
    let other_scale = 1.0 + p_a * normalized_ce - penalty_ratio;
    let mut rest = 0.0;
    for (m, g) in grad[..k].iter_mut().enumerate() {
        if m != true_class {
            let p_m = libm::exp(logits[m] - lse_all);
            rest += p_m;
            *g = p_m * other_scale;
        }
    }
    let p_j = libm::exp(logits[true_class] - lse_all);
    grad[true_class] = -rest + p_a * p_j * normalized_ce - penalty_ratio * p_j;
    grad[k] = p_a * (alpha - one_minus * normalized_ce);
    Ok(loss)
}

/// Standard softmax cross-entropy over all outputs of `logits`; gradient is
/// `softmax - onehot`. Returns the loss.
pub(crate) fn cross_entropy_into(logits: &[f64], target: usize, grad: &mut [f64]) -> Result<f64> {
    check_target(target, logits.len())?;
    softmax_into(logits, grad);
    grad[target] -= 1.0;
    Ok(log_sum_exp(logits) - logits[target])
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn alpha(a: f64) -> AbstentionPenalty {
        AbstentionPenalty::new(a).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&LogitVector::new(vec![0.0, 0.0, 0.0]).unwrap());
        for x in p.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&LogitVector::new(vec![5.0, 5.0, 5.0]).unwrap());
        for x in p.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&LogitVector::new(vec![1000.0, 0.0, 0.0]).unwrap());
        assert!((p.as_slice()[0] - 1.0).abs() < 1e-15);
        assert!(p.as_slice()[1] < 1e-300);
        assert!(p.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn logits_reject_non_finite() {
        assert!(LogitVector::new(vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(LogitVector::new(vec![0.0, f64::INFINITY, 1.0]).is_err());
        assert!(LogitVector::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6, 0.0]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5, 0.0]).is_err());
        assert!(AbstentionPenalty::new(-0.1).is_err());
        assert!(AbstentionPenalty::new(f64::NAN).is_err());
    }

    #[test]
    fn loss_examples() {
        let l = dac_loss(&pv(&[0.5, 0.5, 0.0]), 0, alpha(1.0)).unwrap();
        assert!((l - LN_2).abs() < 1e-15);
        let l = dac_loss(&pv(&[0.5, 0.0, 0.5]), 0, alpha(1.0)).unwrap();
        assert!((l - LN_2).abs() < 1e-15);
        let l = dac_loss(&pv(&[0.25, 0.25, 0.5]), 0, alpha(0.0)).unwrap();
        assert!((l - 0.5 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_errors() {
        let saturated = pv(&[0.0, 0.0, 1.0]);
        assert!(matches!(
            dac_loss(&saturated, 0, alpha(1.0)),
            Err(Error::AbstentionSaturated { .. })
        ));
        assert_eq!(
            dac_loss(&pv(&[0.5, 0.5, 0.0]), 2, alpha(1.0)),
            Err(Error::InvalidTarget { class: 2, k: 2 })
        );
        let logits = LogitVector::new(vec![0.0, 0.0, 60.0]).unwrap();
        assert!(matches!(
            dac_loss_grad(&logits, 0, alpha(1.0)),
            Err(Error::AbstentionSaturated { .. })
        ));
    }

    #[test]
    fn cross_entropy_recovered_without_abstention() {
        for a in [0.0, 0.3, 7.0, 1e6] {
            let l = dac_loss(&pv(&[0.2, 0.3, 0.5, 0.0]), 2, alpha(a)).unwrap();
            assert_eq!(l, -libm::log(0.5));
        }
    }

    #[test]
    fn true_class_grad_examples() {
        for a in [0.0, 1.0, 10.0] {
            assert_eq!(true_class_grad(&pv(&[1.0, 0.0, 0.0]), 0, alpha(a)).unwrap(), 0.0);
        }
        let g = true_class_grad(&pv(&[0.3, 0.7, 0.0]), 0, alpha(2.0)).unwrap();
        assert!((g + 0.7).abs() < 1e-15);
        // p_j = 0 takes the analytic limit.
        let g = true_class_grad(&pv(&[0.0, 0.6, 0.4]), 0, alpha(1.0)).unwrap();
        assert!((g + 0.6).abs() < 1e-15);
    }

    #[test]
    fn grad_examples() {
        let logits = LogitVector::new(vec![libm::log(0.3), libm::log(0.7), -800.0]).unwrap();
        for j in 0..2 {
            let g = dac_loss_grad(&logits, j, alpha(1.0)).unwrap();
            assert_eq!(g[2], 0.0);
        }
        let g = dac_loss_grad(&logits, 0, alpha(1.0)).unwrap();
        assert!((g[0] + 0.7).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(alpha_threshold(&pv(&[0.5, 0.0, 0.5]), 0).unwrap(), 0.0);
        assert_eq!(alpha_threshold(&pv(&[1.0, 0.0, 0.0]), 0).unwrap(), 0.0);
        let t = alpha_threshold(&pv(&[0.25, 0.25, 0.5]), 0).unwrap();
        assert!((t - 0.5 * LN_2).abs() < 1e-15);
        assert_eq!(alpha_threshold(&pv(&[0.0, 0.5, 0.5]), 0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn normalized_probs_examples() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&normalized_true_probs(&pv(&[0.2, 0.3, 0.5])).unwrap(), &[0.4, 0.6]));
        assert!(close(&normalized_true_probs(&pv(&[0.7, 0.3, 0.0])).unwrap(), &[0.7, 0.3]));
        assert!(close(&normalized_true_probs(&pv(&[0.1, 0.1, 0.8])).unwrap(), &[0.5, 0.5]));
        assert!(normalized_true_probs(&pv(&[0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_softmax() {
        let mut g = [0.0; 3];
        let l = cross_entropy_into(&[0.0, 0.0, 0.0], 1, &mut g).unwrap();
        assert!((l - libm::log(3.0)).abs() < 1e-15);
        assert!((g[1] + 2.0 / 3.0).abs() < 1e-15);
    }
}
