//! Dense feedforward networks with manual backpropagation.
//!
//! Layers compute `sigma(W x + b)` with a nonlinear activation on hidden
//! layers and a linear output layer. Parameters are plain `f64` arrays so
//! flattening for the optimizer and for finite-difference checks is exact.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One dense layer; `w` has shape `(out, in)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Gradients matching the layer layout of an [`Mlp`].
pub type MlpGrads = Vec<(Array2<f64>, Array1<f64>)>;

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Per-layer values cached by the training forward pass.
pub struct MlpCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Output of each layer after its activation (linear for the last).
    outputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Glorot-uniform initialization from the given RNG.
    pub fn new_seeded(layer_sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output size");
        let layers = layer_sizes
            .windows(2)
            .map(|pair| {
                let (d_in, d_out) = (pair[0], pair[1]);
                let limit = (6.0 / (d_in + d_out) as f64).sqrt();
                let w = Array2::from_shape_fn((d_out, d_in), |_| rng.gen_range(-limit..limit));
                Dense {
                    w,
                    b: Array1::zeros(d_out),
                }
            })
            .collect();
        Self { layers, activation }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].w.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.w.nrows()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Forward pass on a batch of rows.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut out = x.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            out = out.dot(&layer.w.t()) + &layer.b;
            if idx != last {
                out.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        out
    }

    /// Forward pass that retains the per-layer values needed by [`Self::backward`].
    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let mut out = cur.dot(&layer.w.t()) + &layer.b;
            if idx != last {
                out.mapv_inplace(|v| self.activation.apply(v));
            }
            outputs.push(out.clone());
            cur = out;
        }
        (cur, MlpCache { inputs, outputs })
    }

    /// Backpropagate `grad_out` (gradient w.r.t. the network output), returning
    /// per-layer parameter gradients and the gradient w.r.t. the input batch.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let last = self.layers.len() - 1;
        let mut grads: MlpGrads = Vec::with_capacity(self.layers.len());
        let mut grad = grad_out.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if idx != last {
                // fold the activation derivative into the running gradient
                let out = &cache.outputs[idx];
                grad.zip_mut_with(out, |g, &y| {
                    *g *= self.activation.derivative_from_output(y)
                });
            }
            let dw = grad.t().dot(&cache.inputs[idx]);
            let db = grad.sum_axis(Axis(0));
            grad = grad.dot(&layer.w);
            grads.push((dw, db));
        }
        grads.reverse();
        (grads, grad)
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend(layer.w.iter());
            out.extend(layer.b.iter());
        }
    }

    pub fn read_params(&mut self, flat: &[f64], cursor: &mut usize) -> Result<()> {
        for layer in &mut self.layers {
            for target in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                let v = *flat.get(*cursor).ok_or_else(|| {
                    Error::ShapeMismatch("parameter vector too short".into())
                })?;
                *target = v;
                *cursor += 1;
            }
        }
        Ok(())
    }

    pub fn append_grads(grads: &MlpGrads, out: &mut Vec<f64>) {
        for (dw, db) in grads {
            out.extend(dw.iter());
            out.extend(db.iter());
        }
    }
}

/// First-order optimizers over a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    GradientDescent,
    Momentum,
    AdaptiveMoment,
}

pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: usize,
}

impl Optimizer {
    const MOMENTUM: f64 = 0.9;
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        Self {
            kind,
            lr,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.steps += 1;
        match self.kind {
            OptimizerKind::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Momentum => {
                for ((p, g), m) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    *m = Self::MOMENTUM * *m + g;
                    *p -= self.lr * *m;
                }
            }
            OptimizerKind::AdaptiveMoment => {
                let bc1 = 1.0 - Self::BETA1.powi(self.steps as i32);
                let bc2 = 1.0 - Self::BETA2.powi(self.steps as i32);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
                }
            }
        }
    }
}
