//! Feed-forward autoencoder over raster neighborhood vectors.
//!
//! The encoder half maps a `bands * (1 + |N|)` window vector to a `len`-wide
//! code through tanh (so every code component lies in `[-1, 1]`); the decoder
//! mirrors the encoder shape back to the input width. Training minimizes the
//! mean per-sample squared reconstruction error with mini-batch Adagrad.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, Activation, Adagrad, Layer, Network};

pub const MAGIC: &[u8; 4] = b"UCAE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    net: Network,
    encoder_layers: usize,
    input_width: usize,
    code_len: usize,
}

/// Default hidden width: `ceil((input_width + len) / 2)`.
pub fn default_hidden(input_width: usize, code_len: usize) -> Vec<usize> {
    vec![(input_width + code_len).div_ceil(2)]
}

fn layer_plan(
    input_width: usize,
    code_len: usize,
    hidden: &[usize],
    activation: Activation,
) -> Result<(Vec<Layer>, usize)> {
    if input_width == 0 || code_len == 0 {
        return Err(Error::invalid("autoencoder widths must be at least 1"));
    }
    if code_len > input_width {
        log::warn!("over-complete code: len {code_len} exceeds input width {input_width}");
    }
    let mut widths = vec![input_width];
    widths.extend_from_slice(hidden);
    widths.push(code_len);
    let mut layers = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        let is_code = i == widths.len() - 2;
        layers.push(Layer {
            inputs: pair[0],
            outputs: pair[1],
            activation: if is_code { Activation::Tanh } else { activation },
        });
    }
    let encoder_layers = layers.len();
    let mirrored: Vec<usize> = widths.iter().rev().copied().collect();
    for pair in mirrored.windows(2) {
        layers.push(Layer {
            inputs: pair[0],
            outputs: pair[1],
            activation,
        });
    }
    Ok((layers, encoder_layers))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 50,
            batch_size: 1000,
            lr: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Training-set loss after each epoch.
    pub epoch_losses: Vec<f64>,
    pub seconds: f64,
    pub seed: u64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

impl Autoencoder {
    pub fn new(input_width: usize, code_len: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        Self::with_activation(input_width, code_len, hidden, Activation::Tanh, seed)
    }

    pub fn with_activation(
        input_width: usize,
        code_len: usize,
        hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let (layers, encoder_layers) = layer_plan(input_width, code_len, hidden, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Autoencoder {
            net: Network::glorot(layers, &mut rng)?,
            encoder_layers,
            input_width,
            code_len,
        })
    }

    /// All weights and biases zero; every code is `tanh(0) = 0`.
    pub fn zeros(input_width: usize, code_len: usize, hidden: &[usize]) -> Result<Self> {
        let (layers, encoder_layers) = layer_plan(input_width, code_len, hidden, Activation::Tanh)?;
        Ok(Autoencoder {
            net: Network::zeros(layers)?,
            encoder_layers,
            input_width,
            code_len,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn layers(&self) -> &[Layer] {
        self.net.layers()
    }

    pub fn encoder_layers(&self) -> &[Layer] {
        &self.net.layers()[..self.encoder_layers]
    }

    pub fn decoder_layers(&self) -> &[Layer] {
        &self.net.layers()[self.encoder_layers..]
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width {
            return Err(Error::Width {
                expected: self.input_width,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(self.net.forward_to(x, self.encoder_layers))
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(self.net.forward(x))
    }

    /// Encodes every row of `x`.
    pub fn encode_rows(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_width {
            return Err(Error::Width {
                expected: self.input_width,
                actual: x.cols(),
            });
        }
        use rayon::prelude::*;
        let mut out = Matrix::zeros(x.rows(), self.code_len);
        if self.code_len > 0 {
            out.data_mut()
                .par_chunks_mut(self.code_len)
                .enumerate()
                .for_each(|(i, dst)| {
                    dst.copy_from_slice(&self.net.forward_to(x.row(i), self.encoder_layers));
                });
        }
        Ok(out)
    }

    fn sample_loss(&self, x: &[f64]) -> f64 {
        self.net.forward(x).iter().zip(x).map(|(y, t)| (t - y).powi(2)).sum()
    }

    /// Mean over rows of the squared reconstruction error summed over components.
    pub fn loss(&self, x: &Matrix) -> Result<f64> {
        if x.cols() != self.input_width {
            return Err(Error::Width {
                expected: self.input_width,
                actual: x.cols(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::invalid("loss of an empty dataset"));
        }
        Ok(nn::sum_rows(x, |row| self.sample_loss(row)) / x.rows() as f64)
    }

    /// Gradient of the mean loss over the given rows of `x`.
    pub fn gradient(&self, x: &Matrix, rows: &[usize]) -> Vec<f64> {
        let (mut grad, _) = nn::accumulate(rows, self.net.params().len(), |r, g| {
            let input = x.row(r);
            let trace = self.net.trace(input);
            let out = trace.last().expect("network has layers");
            let d_out: Vec<f64> = out.iter().zip(input).map(|(y, t)| 2.0 * (y - t)).collect();
            self.net.backward(&trace, &d_out, g);
            0.0
        });
        let scale = 1.0 / rows.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        grad
    }

    /// Mini-batch Adagrad on the reconstruction loss. Rows are reshuffled
    /// every epoch; the trailing short batch is kept.
    pub fn train(&mut self, x: &Matrix, params: &TrainParams) -> Result<TrainReport> {
        if x.cols() != self.input_width {
            return Err(Error::Width {
                expected: self.input_width,
                actual: x.cols(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::invalid("cannot train on an empty dataset"));
        }
        if params.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut opt = Adagrad::new(params.lr, self.net.params().len());
        let mut order: Vec<usize> = (0..x.rows()).collect();
        let mut losses = Vec::with_capacity(params.epochs);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let grad = self.gradient(x, batch);
                opt.step(self.net.params_mut(), &grad);
            }
            let loss = self.loss(x)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("reconstruction loss is {loss}"),
                });
            }
            log::debug!("autoencoder epoch {epoch}: loss {loss:.6}");
            losses.push(loss);
        }
        Ok(TrainReport {
            epoch_losses: losses,
            seconds: start.elapsed().as_secs_f64(),
            seed: params.seed,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.input_width as u32).to_le_bytes())?;
        w.write_all(&(self.code_len as u32).to_le_bytes())?;
        w.write_all(&(self.net.layers().len() as u32).to_le_bytes())?;
        w.write_all(&(self.encoder_layers as u32).to_le_bytes())?;
        for l in self.net.layers() {
            w.write_all(&(l.inputs as u32).to_le_bytes())?;
            w.write_all(&(l.outputs as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
        }
        w.write_all(&(self.net.params().len() as u64).to_le_bytes())?;
        for p in self.net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not an autoencoder file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unknown autoencoder format version {version}"
            )));
        }
        let input_width = read_u32(&mut r)? as usize;
        let code_len = read_u32(&mut r)? as usize;
        let n_layers = read_u32(&mut r)? as usize;
        let encoder_layers = read_u32(&mut r)? as usize;
        if n_layers == 0 || encoder_layers == 0 || encoder_layers >= n_layers || n_layers > 1024 {
            return Err(Error::ModelFormat(format!(
                "bad layer counts {encoder_layers}/{n_layers}"
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let inputs = read_u32(&mut r)? as usize;
            let outputs = read_u32(&mut r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            let activation = Activation::from_code(code[0])
                .ok_or_else(|| Error::ModelFormat(format!("unknown activation {}", code[0])))?;
            layers.push(Layer {
                inputs,
                outputs,
                activation,
            });
        }
        if layers[0].inputs != input_width
            || layers[encoder_layers - 1].outputs != code_len
            || layers[n_layers - 1].outputs != input_width
        {
            return Err(Error::ModelFormat("layer shapes disagree with header".into()));
        }
        let count = read_u64(&mut r)? as usize;
        let expected: usize = layers.iter().map(|l| l.inputs * l.outputs + l.outputs).sum();
        if count != expected {
            return Err(Error::ModelFormat(format!(
                "payload holds {count} parameters, shapes need {expected}"
            )));
        }
        let mut params = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            params.push(f64::from_le_bytes(buf));
        }
        Ok(Autoencoder {
            net: Network::from_parts(layers, params)?,
            encoder_layers,
            input_width,
            code_len,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
