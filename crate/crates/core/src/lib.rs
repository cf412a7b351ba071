//! Learned cellular-automaton transition rules for urban growth.
//!
//! The pipeline reads a multi-band raster and two binary built-up maps,
//! encodes every cell's spectral neighborhood with an autoencoder, labels the
//! transition each cell underwent, fits a classifier as the automaton's
//! transition function, and then steps the automaton forward from the latest
//! map. Predictions are scored with land-change metrics.
//!
//! - [`raster`]: NetPBM I/O, normalization, neighborhood windows
//! - [`dataset`]: data/label matrices, transition classes, folds
//! - [`encoder`]: autoencoder over neighborhood vectors
//! - [`knowledge`]: transition-rule learners
//! - [`ca`]: synchronous automaton and recurrent simulation
//! - [`metrics`]: A–E accounting, FoM/PA/UA/OA, cross-validation
//! - [`synth`]: synthetic scenarios with a known rule

pub mod ca;
mod codec;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod knowledge;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
