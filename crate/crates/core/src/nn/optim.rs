use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Stochastic gradient descent with (optionally Nesterov) momentum and L2
/// weight decay folded into the gradient:
///
/// ```text
/// g' = g + weight_decay * w
/// v  = momentum * v + g'
/// w -= lr * (g' + momentum * v)   // nesterov
/// w -= lr * v                     // classical
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    momentum: f64,
    weight_decay: f64,
    nesterov: bool,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(num_params: usize, momentum: f64, weight_decay: f64, nesterov: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be finite and >= 0, got {weight_decay}"
            )));
        }
        Ok(Self {
            momentum,
            weight_decay,
            nesterov,
            velocity: vec![0.0; num_params],
        })
    }

    /// Restores a saved optimizer.
    pub fn from_parts(momentum: f64, weight_decay: f64, nesterov: bool, velocity: Vec<f64>) -> Result<Self> {
        let mut opt = Self::new(0, momentum, weight_decay, nesterov)?;
        opt.velocity = velocity;
        Ok(opt)
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    pub fn nesterov(&self) -> bool {
        self.nesterov
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    /// One update of `params`. Nothing is modified when a gradient entry is
    /// non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::InvalidInput(format!(
                "optimizer holds {} velocities, got {} params and {} gradients",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate must be positive, got {lr}")));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("gradient entry {i} is {}", grads[i])));
        }
        let (m, wd) = (self.momentum, self.weight_decay);
        for ((w, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            let g = g + wd * *w;
            *v = m * *v + g;
            if self.nesterov {
                *w -= lr * (g + m * *v);
            } else {
                *w -= lr * *v;
            }
        }
        if let Some(i) = params.iter().position(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} became {}", params[i])));
        }
        Ok(())
    }
}
