//! Fully-connected embedding network with a unit-norm output and Adam.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::norm;
use crate::error::{Error, Result};

/// Outputs with a smaller pre-normalization norm are rejected.
pub const MIN_OUTPUT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

/// Layer shapes, a flat parameter vector, and optimizer moments.
///
/// Layer `k` maps `widths[k]` inputs to `widths[k + 1]` outputs. Its weights
/// (row-major, `outputs × inputs`) are followed by its bias in `params`.
/// Hidden layers use ReLU; the last layer is affine and is followed by
/// `u / ‖u‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    widths: Vec<usize>,
    params: Vec<f64>,
    adam: AdamState,
}

/// Activations cached by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer; the last entry is `u`.
    pre: Vec<Vec<f64>>,
    raw_norm: f64,
    pub output: Vec<f64>,
}

impl ForwardPass {
    pub fn raw_norm(&self) -> f64 {
        self.raw_norm
    }

    /// Pre-activations of the hidden (ReLU) layers.
    pub fn hidden_pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.pre[..self.pre.len() - 1].iter().flatten().copied()
    }
}

/// Flat gradient with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(pub Vec<f64>);

impl ParamGrads {
    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpParams {
    /// He-normal weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_widths(widths)?;
        let mut params = Vec::with_capacity(param_count(widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self::with_params(widths.to_vec(), params))
    }

    pub fn from_parts(widths: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        Self::check_widths(&widths)?;
        let expected = param_count(&widths);
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: "initial parameters".into(),
            });
        }
        Ok(Self::with_params(widths, params))
    }

    fn with_params(widths: Vec<usize>, params: Vec<f64>) -> Self {
        let n = params.len();
        Self {
            widths,
            params,
            adam: AdamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
                config: AdamConfig::default(),
            },
        }
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 {
            return Err(Error::param("widths", "need at least an input and an output width"));
        }
        if let Some(&w) = widths.iter().find(|&&w| w == 0) {
            return Err(Error::InvalidDimension { dim: w, min: 1 });
        }
        Ok(())
    }

    pub fn with_adam(mut self, config: AdamConfig) -> Self {
        self.adam.config = config;
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
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

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn restore_adam(&mut self, state: AdamState) -> Result<()> {
        if state.m.len() != self.params.len() || state.v.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                found: state.m.len(),
            });
        }
        self.adam = state;
        Ok(())
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads(vec![0.0; self.params.len()])
    }

    /// `(weight offset, bias offset)` of each layer.
    fn offsets(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let mut at = 0;
        self.widths.windows(2).map(move |w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = at;
            let bias = at + fan_in * fan_out;
            at = bias + fan_out;
            (fan_in, fan_out, weights, bias)
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let layers = self.widths.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut h = x.to_vec();
        for (k, (fan_in, fan_out, w_at, b_at)) in self.offsets().enumerate() {
            let w = &self.params[w_at..w_at + fan_in * fan_out];
            let b = &self.params[b_at..b_at + fan_out];
            let z: Vec<f64> = (0..fan_out)
                .map(|r| {
                    b[r] + w[r * fan_in..(r + 1) * fan_in]
                        .iter()
                        .zip(&h)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                })
                .collect();
            let next = if k + 1 < layers {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        let raw_norm = norm(&h);
        if !raw_norm.is_finite() {
            return Err(Error::NonFinite {
                context: "network output".into(),
            });
        }
        if raw_norm < MIN_OUTPUT_NORM {
            return Err(Error::DegenerateOutput { norm: raw_norm });
        }
        let output = h.iter().map(|v| v / raw_norm).collect();
        Ok(ForwardPass {
            inputs,
            pre,
            raw_norm,
            output,
        })
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|p| p.output)
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂f` for one forward pass.
    pub fn backward(&self, pass: &ForwardPass, grad_embedding: &[f64], grads: &mut ParamGrads) {
        let f = &pass.output;
        let radial: f64 = f.iter().zip(grad_embedding).map(|(a, b)| a * b).sum();
        // (I - f fᵀ) g / ‖u‖
        let mut delta: Vec<f64> = grad_embedding
            .iter()
            .zip(f)
            .map(|(g, fi)| (g - fi * radial) / pass.raw_norm)
            .collect();
        let offsets: Vec<_> = self.offsets().collect();
        for (k, &(fan_in, fan_out, w_at, b_at)) in offsets.iter().enumerate().rev() {
            if k + 1 < offsets.len() {
                for (d, z) in delta.iter_mut().zip(&pass.pre[k]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &pass.inputs[k];
            for r in 0..fan_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grads.0[w_at + r * fan_in..w_at + (r + 1) * fan_in];
                row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                grads.0[b_at + r] += d;
            }
            if k > 0 {
                let w = &self.params[w_at..w_at + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for r in 0..fan_out {
                    let d = delta[r];
                    if d != 0.0 {
                        prev.iter_mut()
                            .zip(&w[r * fan_in..(r + 1) * fan_in])
                            .for_each(|(p, wv)| *p += d * wv);
                    }
                }
                delta = prev;
            }
        }
    }

    /// Bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &ParamGrads, lr: f64) -> Result<()> {
        if grads.0.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                found: grads.0.len(),
            });
        }
        if let Some(i) = grads.0.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradient entry {i} ({})", grads.0[i]),
            });
        }
        let AdamConfig { beta1, beta2, eps } = self.adam.config;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, m), v), &g) in self
            .params
            .iter_mut()
            .zip(&mut self.adam.m)
            .zip(&mut self.adam.v)
            .zip(&grads.0)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("parameter {i} after Adam step {}", self.adam.step),
            });
        }
        Ok(())
    }
}
