//! Minimal dense feed-forward network with flat parameter storage, shared by
//! the autoencoder and the MLP transition model.
//!
//! Each layer stores its weight matrix (`outputs x inputs`, row-major)
//! followed by its bias vector in one contiguous parameter slice, so
//! optimizers and finite-difference checks can treat the whole network as a
//! single vector.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Relu => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            2 => Activation::Sigmoid,
            3 => Activation::Relu,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

impl Network {
    pub fn zeros(layers: Vec<Layer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::invalid(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        if layers.iter().any(|l| l.inputs == 0 || l.outputs == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        Ok(Network {
            layers,
            offsets,
            params: vec![0.0; total],
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng>(layers: Vec<Layer>, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        for (li, layer) in net.layers.iter().enumerate() {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            let start = net.offsets[li];
            for w in &mut net.params[start..start + layer.inputs * layer.outputs] {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn from_parts(layers: Vec<Layer>, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        if params.len() != net.params.len() {
            return Err(Error::Width {
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    fn layer_params(&self, li: usize) -> (&[f64], &[f64]) {
        let l = &self.layers[li];
        let start = self.offsets[li];
        let w_end = start + l.inputs * l.outputs;
        (&self.params[start..w_end], &self.params[w_end..w_end + l.outputs])
    }

    fn layer_forward(&self, li: usize, input: &[f64], out: &mut Vec<f64>) {
        let l = &self.layers[li];
        let (w, b) = self.layer_params(li);
        out.clear();
        for o in 0..l.outputs {
            let row = &w[o * l.inputs..(o + 1) * l.inputs];
            let z: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + b[o];
            out.push(l.activation.apply(z));
        }
    }

    /// Output of the first `depth` layers.
    pub fn forward_to(&self, x: &[f64], depth: usize) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for li in 0..depth {
            self.layer_forward(li, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_to(x, self.layers.len())
    }

    /// Every layer's output, preceded by the input itself.
    pub fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for li in 0..self.layers.len() {
            let mut out = Vec::with_capacity(self.layers[li].outputs);
            self.layer_forward(li, &acts[li], &mut out);
            acts.push(out);
        }
        acts
    }

    /// Accumulates `dL/dparams` into `grad` given a forward trace and
    /// `dL/d(output)` (taken after the last activation).
    pub fn backward(&self, trace: &[Vec<f64>], d_out: &[f64], grad: &mut [f64]) {
        let mut delta: Vec<f64> = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let out = &trace[li + 1];
            let input = &trace[li];
            for (d, &a) in delta.iter_mut().zip(out) {
                *d *= l.activation.derivative(a);
            }
            let start = self.offsets[li];
            let w_end = start + l.inputs * l.outputs;
            let (gw, rest) = grad[start..].split_at_mut(l.inputs * l.outputs);
            let gb = &mut rest[..l.outputs];
            for o in 0..l.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, &a) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if li > 0 {
                let w = &self.params[start..w_end];
                let mut prev = vec![0.0; l.inputs];
                for o in 0..l.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &wv) in prev.iter_mut().zip(&w[o * l.inputs..(o + 1) * l.inputs]) {
                        *p += d * wv;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Rows per parallel work unit when accumulating batch gradients. Partial
/// sums are combined in chunk order, so results do not depend on the thread
/// count.
const GRAD_CHUNK: usize = 64;

/// Sums `per_row(row_index, grad)` contributions over `rows` in fixed chunk
/// order. Returns the summed gradient and the summed loss.
pub(crate) fn accumulate<F>(rows: &[usize], width: usize, per_row: F) -> (Vec<f64>, f64)
where
    F: Fn(usize, &mut [f64]) -> f64 + Sync,
{
    let partials: Vec<(Vec<f64>, f64)> = rows
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; width];
            let mut loss = 0.0;
            for &r in chunk {
                loss += per_row(r, &mut g);
            }
            (g, loss)
        })
        .collect();
    let mut grad = vec![0.0; width];
    let mut loss = 0.0;
    for (g, l) in partials {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        loss += l;
    }
    (grad, loss)
}

/// Sums `per_row` values over all rows of `x` in fixed chunk order.
pub(crate) fn sum_rows<F>(x: &Matrix, per_row: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let idx: Vec<usize> = (0..x.rows()).collect();
    idx.par_chunks(GRAD_CHUNK)
        .map(|chunk| chunk.iter().map(|&r| per_row(x.row(r))).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Adagrad: per-parameter step `lr * g / (sqrt(G) + eps)` with `G` the running
/// sum of squared gradients.
#[derive(Debug, Clone)]
pub struct Adagrad {
    lr: f64,
    eps: f64,
    accum: Vec<f64>,
}

impl Adagrad {
    pub const EPS: f64 = 1e-8;

    pub fn new(lr: f64, n: usize) -> Self {
        Adagrad {
            lr,
            eps: Self::EPS,
            accum: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, g), acc) in params.iter_mut().zip(grad).zip(&mut self.accum) {
            *acc += g * g;
            *p -= self.lr * g / (acc.sqrt() + self.eps);
        }
    }
}

/// Classical momentum: `v = mu * v - lr * g; p += v`.
#[derive(Debug, Clone)]
pub struct Momentum {
    lr: f64,
    mu: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(lr: f64, mu: f64, n: usize) -> Self {
        Momentum {
            lr,
            mu,
            velocity: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, g), v) in params.iter_mut().zip(grad).zip(&mut self.velocity) {
            *v = self.mu * *v - self.lr * g;
            *p += *v;
        }
    }
}
