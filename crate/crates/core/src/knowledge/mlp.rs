//! Multi-layer perceptron classifier: softmax output, mean cross-entropy
//! loss, trained with mini-batch momentum SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::TransitionClass;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, Activation, Layer, Momentum, Network};

use super::logreg::class_set;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![10],
            activation: Activation::Tanh,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 100,
            epochs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    classes: Vec<TransitionClass>,
    net: Network,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl MlpClassifier {
    pub fn init(width: usize, y: &[TransitionClass], params: &MlpParams, seed: u64) -> Result<Self> {
        let classes = class_set(y);
        if classes.is_empty() {
            return Err(Error::invalid("cannot build an MLP without labels"));
        }
        let mut widths = vec![width];
        widths.extend_from_slice(&params.hidden);
        widths.push(classes.len());
        let layers: Vec<Layer> = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                inputs: w[0],
                outputs: w[1],
                activation: if i == widths.len() - 2 {
                    Activation::Identity
                } else {
                    params.activation
                },
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(MlpClassifier {
            classes,
            net: Network::glorot(layers, &mut rng)?,
        })
    }

    /// Returns the trained model and the training loss after each epoch.
    pub fn fit(x: &Matrix, y: &[TransitionClass], params: &MlpParams, seed: u64) -> Result<(Self, Vec<f64>)> {
        if x.rows() != y.len() {
            return Err(Error::dims(
                format!("{} labels", x.rows()),
                format!("{} labels", y.len()),
            ));
        }
        if x.rows() == 0 {
            return Err(Error::invalid("cannot fit an MLP on an empty dataset"));
        }
        if params.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let mut model = Self::init(x.cols(), y, params, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut opt = Momentum::new(params.lr, params.momentum, model.net.params().len());
        let mut order: Vec<usize> = (0..x.rows()).collect();
        let targets = model.targets(y);
        let mut losses = Vec::with_capacity(params.epochs);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let grad = model.gradient_idx(x, &targets, batch);
                opt.step(model.net.params_mut(), &grad);
            }
            let loss = model.loss_idx(x, &targets);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("cross-entropy is {loss}"),
                });
            }
            losses.push(loss);
        }
        Ok((model, losses))
    }

    pub fn classes(&self) -> &[TransitionClass] {
        &self.classes
    }

    pub fn feature_width(&self) -> usize {
        self.net.input_width()
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    fn targets(&self, y: &[TransitionClass]) -> Vec<usize> {
        y.iter()
            .map(|c| self.classes.iter().position(|k| k == c).unwrap_or(usize::MAX))
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.net.forward(x))
    }

    pub fn predict_row(&self, x: &[f64]) -> TransitionClass {
        let p = self.probabilities(x);
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        self.classes[best]
    }

    fn loss_idx(&self, x: &Matrix, targets: &[usize]) -> f64 {
        let rows: Vec<usize> = (0..x.rows()).collect();
        let (_, total) = nn::accumulate(&rows, 0, |i, _| {
            let p = self.probabilities(x.row(i));
            -p.get(targets[i]).copied().unwrap_or(0.0).max(f64::MIN_POSITIVE).ln()
        });
        total / x.rows() as f64
    }

    fn gradient_idx(&self, x: &Matrix, targets: &[usize], rows: &[usize]) -> Vec<f64> {
        let (mut grad, _) = nn::accumulate(rows, self.net.params().len(), |i, g| {
            let trace = self.net.trace(x.row(i));
            let mut d = softmax(trace.last().expect("network has layers"));
            if let Some(t) = d.get_mut(targets[i]) {
                *t -= 1.0;
            }
            self.net.backward(&trace, &d, g);
            0.0
        });
        let scale = 1.0 / rows.len().max(1) as f64;
        grad.iter_mut().for_each(|v| *v *= scale);
        grad
    }

    /// Mean cross-entropy over all rows.
    pub fn loss(&self, x: &Matrix, y: &[TransitionClass]) -> f64 {
        self.loss_idx(x, &self.targets(y))
    }

    /// Analytic gradient of [`Self::loss`].
    pub fn gradient(&self, x: &Matrix, y: &[TransitionClass]) -> Vec<f64> {
        let rows: Vec<usize> = (0..x.rows()).collect();
        self.gradient_idx(x, &self.targets(y), &rows)
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        let layers = self.net.layers();
        w.u32(layers.len() as u32);
        for l in layers {
            w.u32(l.inputs as u32);
            w.u32(l.outputs as u32);
            w.u8(l.activation.code());
        }
        w.f64s(self.net.params());
    }

    pub(crate) fn read(r: &mut ByteReader<'_>, classes: Vec<TransitionClass>) -> Result<Self> {
        let n = r.u32()? as usize;
        if n == 0 || n > 1024 {
            return Err(Error::ModelFormat(format!("bad MLP layer count {n}")));
        }
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let inputs = r.u32()? as usize;
            let outputs = r.u32()? as usize;
            let code = r.u8()?;
            let activation =
                Activation::from_code(code).ok_or_else(|| Error::ModelFormat(format!("unknown activation {code}")))?;
            layers.push(Layer {
                inputs,
                outputs,
                activation,
            });
        }
        if layers[n - 1].outputs != classes.len() {
            return Err(Error::ModelFormat("MLP output width differs from class count".into()));
        }
        let params = r.f64s()?;
        Ok(MlpClassifier {
            classes,
            net: Network::from_parts(layers, params).map_err(|e| Error::ModelFormat(e.to_string()))?,
        })
    }
}
