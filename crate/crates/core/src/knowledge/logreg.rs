//! One-vs-rest L2-regularized logistic regression trained by mini-batch SGD.
//!
//! For each training class `c` the binary objective is
//! `J(w, b) = mean_i logloss(y_i == c, sigmoid(w.x_i + b)) + l2 / (2n) * |w|^2`.
//! The bias is not penalized.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::TransitionClass;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegParams {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2: 1.0,
            epochs: 30,
            lr: 0.1,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    classes: Vec<TransitionClass>,
    width: usize,
    /// Per class: `width` weights followed by the bias.
    params: Vec<f64>,
}

/// Sorted distinct classes present in `y`.
pub(crate) fn class_set(y: &[TransitionClass]) -> Vec<TransitionClass> {
    let mut c: Vec<_> = y.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticRegression {
    /// Zero-weight model over the classes present in `y`.
    pub fn zeros(width: usize, y: &[TransitionClass]) -> Self {
        let classes = class_set(y);
        LogisticRegression {
            params: vec![0.0; classes.len() * (width + 1)],
            classes,
            width,
        }
    }

    pub fn fit(x: &Matrix, y: &[TransitionClass], params: &LogRegParams, seed: u64) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims(
                format!("{} labels", x.rows()),
                format!("{} labels", y.len()),
            ));
        }
        if x.rows() == 0 {
            return Err(Error::invalid("cannot fit logistic regression on an empty dataset"));
        }
        if params.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let mut model = Self::zeros(x.cols(), y);
        if model.classes.len() < 2 {
            return Ok(model);
        }
        let n = x.rows() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        let stride = model.width + 1;
        // implicit (proximal) weight decay keeps large penalties stable
        let shrink = 1.0 / (1.0 + params.lr * params.l2 / n);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let grad = model.data_gradient(x, y, batch);
                for (c, chunk) in model.params.chunks_mut(stride).enumerate() {
                    let g = &grad[c * stride..(c + 1) * stride];
                    for (p, gv) in chunk[..stride - 1].iter_mut().zip(g) {
                        *p = (*p - params.lr * gv) * shrink;
                    }
                    chunk[stride - 1] -= params.lr * g[stride - 1];
                }
            }
            if model.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    message: "logistic regression weights became non-finite".into(),
                });
            }
        }
        Ok(model)
    }

    pub fn classes(&self) -> &[TransitionClass] {
        &self.classes
    }

    pub fn feature_width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn margin(&self, class_idx: usize, x: &[f64]) -> f64 {
        let stride = self.width + 1;
        let p = &self.params[class_idx * stride..(class_idx + 1) * stride];
        p[..self.width].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[self.width]
    }

    /// Per-class one-vs-rest probabilities, aligned with [`Self::classes`].
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes.len()).map(|c| sigmoid(self.margin(c, x))).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> TransitionClass {
        if self.classes.len() == 1 {
            return self.classes[0];
        }
        let scores = self.scores(x);
        let mut best = 0;
        for c in 1..scores.len() {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        self.classes[best]
    }

    /// Sum of the per-class objectives over the full dataset.
    pub fn objective(&self, x: &Matrix, y: &[TransitionClass], l2: f64) -> f64 {
        let n = x.rows() as f64;
        let stride = self.width + 1;
        let mut total = 0.0;
        for (c, &class) in self.classes.iter().enumerate() {
            let mut loss = 0.0;
            for (row, label) in x.iter_rows().zip(y) {
                let z = self.margin(c, row);
                // -log p for positives, -log (1 - p) for negatives
                loss += if *label == class { log1p_exp(-z) } else { log1p_exp(z) };
            }
            let w = &self.params[c * stride..c * stride + self.width];
            total += loss / n + l2 / (2.0 * n) * w.iter().map(|v| v * v).sum::<f64>();
        }
        total
    }

    /// Mean data-term gradient over `rows`, laid out like the parameters.
    fn data_gradient(&self, x: &Matrix, y: &[TransitionClass], rows: &[usize]) -> Vec<f64> {
        let stride = self.width + 1;
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / rows.len() as f64;
        for &i in rows {
            let row = x.row(i);
            for (c, &class) in self.classes.iter().enumerate() {
                let target = if y[i] == class { 1.0 } else { 0.0 };
                let err = (sigmoid(self.margin(c, row)) - target) * scale;
                let g = &mut grad[c * stride..(c + 1) * stride];
                for (gv, v) in g.iter_mut().zip(row) {
                    *gv += err * v;
                }
                g[self.width] += err;
            }
        }
        grad
    }

    /// Analytic gradient of [`Self::objective`].
    pub fn gradient(&self, x: &Matrix, y: &[TransitionClass], l2: f64) -> Vec<f64> {
        let rows: Vec<usize> = (0..x.rows()).collect();
        let mut grad = self.data_gradient(x, y, &rows);
        let n = x.rows() as f64;
        let stride = self.width + 1;
        for c in 0..self.classes.len() {
            for j in 0..self.width {
                grad[c * stride + j] += l2 / n * self.params[c * stride + j];
            }
        }
        grad
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.u32(self.width as u32);
        w.f64s(&self.params);
    }

    pub(crate) fn read(r: &mut ByteReader<'_>, classes: Vec<TransitionClass>) -> Result<Self> {
        let width = r.u32()? as usize;
        let params = r.f64s()?;
        if params.len() != classes.len() * (width + 1) {
            return Err(Error::ModelFormat("logistic regression payload size mismatch".into()));
        }
        Ok(LogisticRegression { classes, width, params })
    }
}
