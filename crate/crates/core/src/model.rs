//! Small MLP classifier with a hand-written backward pass.
//!
//! Parameters are stored flat, layer by layer: the `out x in` weight matrix in
//! row-major order followed by the `out` biases. Hidden layers use the tanh
//! approximation of GELU; the output layer is linear and feeds a softmax
//! cross-entropy loss averaged over the batch.

use thiserror::Error;

use crate::tensor::{axpy_slices, dot_slices, ParamVector, Real, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("an MLP needs at least an input and an output layer, got {0:?}")]
    BadLayers(Vec<usize>),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch inputs have {got} values, expected {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: u32, classes: usize },
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu<T: Real>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
fn gelu_grad<T: Real>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = T::lit(GELU_C) * (T::one() + T::lit(3.0 * GELU_A) * x * x);
    T::lit(0.5) * (T::one() + t) + T::lit(0.5) * x * (T::one() - t * t) * du
}

/// A minibatch: `labels.len()` rows of `input_dim` features.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub inputs: Vec<T>,
    pub labels: Vec<u32>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Layer widths of an MLP, input first, class count last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    layer_dims: Vec<usize>,
}

impl MlpArch {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self, ModelError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(ModelError::BadLayers(layer_dims));
        }
        Ok(Self { layer_dims })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offsets of each layer's weight block and bias block in the flat vector.
    pub fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layer_dims
            .windows(2)
            .map(|w| {
                let weights = off;
                let biases = off + w[0] * w[1];
                off = biases + w[1];
                (weights, biases)
            })
            .collect()
    }

    /// Scaled-normal weights (`std = gain / sqrt(fan_in)`), zero biases.
    pub fn init_params<T: Real>(&self, rng: &mut Rng, gain: f64) -> ParamVector<T> {
        let mut p = ParamVector::zeros(self.param_count());
        let offsets = self.layer_offsets();
        for (l, w) in self.layer_dims.windows(2).enumerate() {
            let std = gain / (w[0] as f64).sqrt();
            let (wo, _) = offsets[l];
            for i in 0..w[0] * w[1] {
                p[wo + i] = T::lit(rng.normal() * std);
            }
        }
        p
    }

    fn check(&self, params: &ParamVector<impl Real>, inputs: usize, labels: &[u32]) -> Result<(), ModelError> {
        if params.len() != self.param_count() {
            return Err(ModelError::ParamCount { expected: self.param_count(), got: params.len() });
        }
        if labels.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let expected = labels.len() * self.input_dim();
        if inputs != expected {
            return Err(ModelError::InputShape { expected, got: inputs });
        }
        let classes = self.n_classes();
        if let Some(&label) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(ModelError::Label { label, classes });
        }
        Ok(())
    }

    /// Pre-activations of every layer; the last entry holds the logits.
    fn forward_all<T: Real>(&self, params: &[T], inputs: &[T], batch: usize) -> Vec<Vec<T>> {
        let offsets = self.layer_offsets();
        let mut pre: Vec<Vec<T>> = Vec::with_capacity(self.num_layers());
        let mut act: Vec<T> = inputs.to_vec();
        for (l, w) in self.layer_dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (wo, bo) = offsets[l];
            let weights = &params[wo..wo + n_in * n_out];
            let biases = &params[bo..bo + n_out];
            let mut z = vec![T::zero(); batch * n_out];
            for i in 0..batch {
                let a_row = &act[i * n_in..(i + 1) * n_in];
                let z_row = &mut z[i * n_out..(i + 1) * n_out];
                for o in 0..n_out {
                    z_row[o] = dot_slices(&weights[o * n_in..(o + 1) * n_in], a_row) + biases[o];
                }
            }
            if l + 1 < self.num_layers() {
                act = z.iter().map(|&v| gelu(v)).collect();
            }
            pre.push(z);
        }
        pre
    }

    pub fn logits<T: Real>(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<Vec<T>, ModelError> {
        self.check(params, batch.inputs.len(), &batch.labels)?;
        Ok(self.forward_all(params.as_slice(), &batch.inputs, batch.len()).pop().unwrap())
    }

    pub fn loss<T: Real>(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<T, ModelError> {
        let logits = self.logits(params, batch)?;
        let c = self.n_classes();
        let mut total = T::zero();
        for (i, &y) in batch.labels.iter().enumerate() {
            let row = &logits[i * c..(i + 1) * c];
            total += log_sum_exp(row) - row[y as usize];
        }
        Ok(total / T::lit(batch.len() as f64))
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_grad<T: Real>(
        &self,
        params: &ParamVector<T>,
        batch: &Batch<T>,
    ) -> Result<(T, ParamVector<T>), ModelError> {
        self.check(params, batch.inputs.len(), &batch.labels)?;
        let n = batch.len();
        let p = params.as_slice();
        let pre = self.forward_all(p, &batch.inputs, n);
        let c = self.n_classes();
        let inv_n = T::one() / T::lit(n as f64);

        let logits = pre.last().unwrap();
        let mut loss = T::zero();
        let mut delta = vec![T::zero(); n * c];
        for (i, &y) in batch.labels.iter().enumerate() {
            let row = &logits[i * c..(i + 1) * c];
            let lse = log_sum_exp(row);
            loss += lse - row[y as usize];
            let d = &mut delta[i * c..(i + 1) * c];
            for j in 0..c {
                d[j] = (row[j] - lse).exp() * inv_n;
            }
            d[y as usize] -= inv_n;
        }
        loss *= inv_n;

        let offsets = self.layer_offsets();
        let mut grad = ParamVector::zeros(p.len());
        let g = grad.as_mut_slice();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let (wo, bo) = offsets[l];
            let input_act: Vec<T> = if l == 0 {
                batch.inputs.clone()
            } else {
                pre[l - 1].iter().map(|&v| gelu(v)).collect()
            };
            {
                let (gw, gb) = g[wo..bo + n_out].split_at_mut(n_in * n_out);
                for i in 0..n {
                    let a_row = &input_act[i * n_in..(i + 1) * n_in];
                    let d_row = &delta[i * n_out..(i + 1) * n_out];
                    for o in 0..n_out {
                        let d = d_row[o];
                        if d != T::zero() {
                            axpy_slices(d, a_row, &mut gw[o * n_in..(o + 1) * n_in]);
                        }
                        gb[o] += d;
                    }
                }
            }
            if l > 0 {
                let weights = &p[wo..wo + n_in * n_out];
                let z_prev = &pre[l - 1];
                let mut next = vec![T::zero(); n * n_in];
                for i in 0..n {
                    let d_row = &delta[i * n_out..(i + 1) * n_out];
                    let out_row = &mut next[i * n_in..(i + 1) * n_in];
                    for o in 0..n_out {
                        axpy_slices(d_row[o], &weights[o * n_in..(o + 1) * n_in], out_row);
                    }
                    for (v, &z) in out_row.iter_mut().zip(&z_prev[i * n_in..(i + 1) * n_in]) {
                        *v *= gelu_grad(z);
                    }
                }
                delta = next;
            }
        }
        Ok((loss, grad))
    }
}

fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let s: T = row.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

/// An architecture together with its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    pub arch: MlpArch,
    pub params: ParamVector<T>,
}

impl<T: Real> MlpModel<T> {
    pub fn new(arch: MlpArch, params: ParamVector<T>) -> Result<Self, ModelError> {
        if params.len() != arch.param_count() {
            return Err(ModelError::ParamCount { expected: arch.param_count(), got: params.len() });
        }
        Ok(Self { arch, params })
    }

    pub fn random(arch: MlpArch, rng: &mut Rng) -> Self {
        let params = arch.init_params(rng, 1.0);
        Self { arch, params }
    }

    pub fn loss_and_grad(&self, batch: &Batch<T>) -> Result<(T, ParamVector<T>), ModelError> {
        self.arch.loss_and_grad(&self.params, batch)
    }

    pub fn loss(&self, batch: &Batch<T>) -> Result<T, ModelError> {
        self.arch.loss(&self.params, batch)
    }
}
