use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Matrix;
use crate::error::{Error, Result};

/// Fully connected network with rectifier hidden layers and linear output.
///
/// Parameters live in one flat vector; layer `l` stores its `out x in`
/// weight matrix row-major, followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input batch, `activations[l]` the rectified
    /// output of hidden layer `l`.
    activations: Vec<Matrix>,
    logits: Matrix,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn into_logits(self) -> Matrix {
        self.logits
    }
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Weights ~ N(0, 2 / fan_in), biases zero, drawn layer by layer in
    /// storage order from a ChaCha8 stream seeded with `seed`.
    ///
    /// Output units are drawn in order, so two networks that differ only in
    /// trailing output units share every other initial parameter.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = libm::sqrt(2.0 / fan_in as f64);
            let normal = Normal::new(0.0, std)
                .map_err(|e| Error::Config(format!("bad init scale: {e}")))?;
            for p in &mut model.params[offset..offset + fan_in * fan_out] {
                *p = normal.sample(&mut rng);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(model)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least input and output dims, got {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("layer dims must be positive, got {dims:?}")));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Rebuilds a model from its dims and flat parameter vector.
    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        if params.len() != model.params.len() {
            return Err(Error::Dimension(format!(
                "dims {dims:?} need {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.dims[..=layer])
    }

    /// `(weights, biases)` of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.layer_offset(layer);
        let w_end = start + fan_in * fan_out;
        (&self.params[start..w_end], &self.params[w_end..w_end + fan_out])
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.layer_offset(layer);
        let (w, rest) = self.params[start..].split_at_mut(fan_in * fan_out);
        (w, &mut rest[..fan_out])
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "batch has {} features, model expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn apply_layer(&self, layer: usize, input: &Matrix, rectify: bool) -> Matrix {
        let (weights, biases) = self.layer(layer);
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let mut out = Matrix::zeros(input.rows(), fan_out);
        for r in 0..input.rows() {
            let x = input.row(r);
            let y = out.row_mut(r);
            for (o, yo) in y.iter_mut().enumerate() {
                let w = &weights[o * fan_in..(o + 1) * fan_in];
                let mut acc = biases[o];
                for (wi, xi) in w.iter().zip(x) {
                    acc += wi * xi;
                }
                *yo = if rectify && acc < 0.0 { 0.0 } else { acc };
            }
        }
        out
    }

    /// Logits for every row of `batch`.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward_trace(batch)?.logits)
    }

    pub fn forward_trace(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.check_batch(batch)?;
        let last = self.num_layers() - 1;
        let mut activations = Vec::with_capacity(self.num_layers());
        activations.push(batch.clone());
        for layer in 0..last {
            let next = self.apply_layer(layer, &activations[layer], true);
            activations.push(next);
        }
        let logits = self.apply_layer(last, &activations[last], false);
        Ok(ForwardTrace {
            activations,
            logits,
        })
    }

    /// Parameter gradients of `sum_rows <logit_grads_row, logits_row>`, i.e.
    /// the chain rule applied to already-reduced per-logit gradients.
    pub fn backward(&self, batch: &Matrix, logit_grads: &Matrix) -> Result<Vec<f64>> {
        let trace = self.forward_trace(batch)?;
        self.backward_trace(&trace, logit_grads)
    }

    pub fn backward_trace(&self, trace: &ForwardTrace, logit_grads: &Matrix) -> Result<Vec<f64>> {
        let n = trace.logits.rows();
        if logit_grads.rows() != n || logit_grads.cols() != self.output_dim() {
            return Err(Error::InvalidInput(format!(
                "logit gradients are {}x{}, expected {}x{}",
                logit_grads.rows(),
                logit_grads.cols(),
                n,
                self.output_dim()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = logit_grads.clone();
        for layer in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let input = &trace.activations[layer];
            let start = self.layer_offset(layer);
            let (gw, rest) = grads[start..].split_at_mut(fan_in * fan_out);
            let gb = &mut rest[..fan_out];
            for r in 0..n {
                let d = delta.row(r);
                let x = input.row(r);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    for (g, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                        *g += dv * xi;
                    }
                }
            }
            if layer == 0 {
                break;
            }
            let (weights, _) = self.layer(layer);
            let mut prev = Matrix::zeros(n, fan_in);
            for r in 0..n {
                let d = delta.row(r);
                let x = input.row(r);
                let p = prev.row_mut(r);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (pi, wi) in p.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                        *pi += dv * wi;
                    }
                }
                // rectifier derivative: the stored activation is zero exactly
                // where the unit was clipped
                for (pi, &xi) in p.iter_mut().zip(x) {
                    if xi <= 0.0 {
                        *pi = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        let m = Mlp::new(&[2, 8, 3], 7).unwrap();
        assert_eq!(m.num_params(), 2 * 8 + 8 + 8 * 3 + 3);
        assert_eq!(m.num_params(), 51);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = Mlp::new(&[3, 5, 4], 11).unwrap();
        let b = Mlp::new(&[3, 5, 4], 11).unwrap();
        let c = Mlp::new(&[3, 5, 4], 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        let (_, biases) = a.layer(0);
        assert!(biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn extra_output_unit_keeps_other_initial_parameters() {
        let small = Mlp::new(&[2, 6, 3], 5).unwrap();
        let big = Mlp::new(&[2, 6, 4], 5).unwrap();
        assert_eq!(small.layer(0), big.layer(0));
        let (ws, _) = small.layer(1);
        let (wb, _) = big.layer(1);
        assert_eq!(ws, &wb[..ws.len()]);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Mlp::new(&[3], 0).is_err());
        assert!(Mlp::new(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let m = Mlp::zeros(&[3, 4, 3]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        let y = m.forward(&x).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_network() {
        let mut m = Mlp::zeros(&[3, 3]).unwrap();
        let (w, _) = m.layer_mut(0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), x);
    }

    #[test]
    fn batch_rows_are_independent() {
        let m = Mlp::new(&[2, 7, 3], 3).unwrap();
        let rows = [[0.3, -1.2], [2.0, 0.1], [-0.7, 0.9]];
        let all = m.forward(&Matrix::from_rows(&rows).unwrap()).unwrap();
        let one = m.forward(&Matrix::from_rows(&rows[1..2]).unwrap()).unwrap();
        assert_eq!(one.row(0), all.row(1));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = Mlp::new(&[2, 3], 0).unwrap();
        let x = Matrix::zeros(1, 3);
        assert!(m.forward(&x).is_err());
        let x = Matrix::zeros(2, 2);
        assert!(m.backward(&x, &Matrix::zeros(1, 3)).is_err());
        assert!(m.backward(&x, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn zero_logit_gradient_gives_zero_parameter_gradient() {
        let m = Mlp::new(&[2, 4, 3], 9).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        let g = m.backward(&x, &Matrix::zeros(2, 3)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_unit() {
        let m = Mlp::new(&[1, 1], 4).unwrap();
        let x = Matrix::from_rows(&[[2.5]]).unwrap();
        let g = m.backward(&x, &Matrix::from_rows(&[[-0.4]]).unwrap()).unwrap();
        assert_eq!(g, vec![2.5 * -0.4, -0.4]);
    }
}
