#![allow(dead_code)]

use urbanca::dataset::{encode_raster, feature_matrix, neighborhood_matrix, transition_labels, TransitionClass};
use urbanca::encoder::{Autoencoder, TrainParams};
use urbanca::matrix::Matrix;
use urbanca::raster::{normalize, NeighborhoodSpec, NormalizedRaster};
use urbanca::synth::{generate, SynthOutput, SynthScenario};

/// A small synthetic scenario with a trained encoder and the `0 -> 1` matrices.
pub struct Fixture {
    pub scenario: SynthOutput,
    pub raster: NormalizedRaster,
    pub spec: NeighborhoodSpec,
    pub encoder: Autoencoder,
    pub encodings: Matrix,
    pub x: Matrix,
    pub y: Vec<TransitionClass>,
}

pub fn fixture(side: usize, seed: u64, epochs: usize) -> Fixture {
    let scenario = generate(&SynthScenario {
        width: side,
        height: side,
        seed,
        ..SynthScenario::default()
    })
    .unwrap();
    let raster = normalize(&scenario.raster).unwrap();
    let spec = NeighborhoodSpec::default();
    let windows = neighborhood_matrix(&raster, &spec);
    let mut encoder = Autoencoder::new(windows.cols(), 5, &[16], seed).unwrap();
    encoder
        .train(
            &windows,
            &TrainParams {
                epochs,
                seed,
                ..TrainParams::default()
            },
        )
        .unwrap();
    let encodings = encode_raster(&raster, &encoder, &spec).unwrap();
    let x = feature_matrix(&scenario.maps[0], &encodings, &spec).unwrap().matrix;
    let y = transition_labels(&scenario.maps[0], &scenario.maps[1], true).unwrap();
    Fixture {
        scenario,
        raster,
        spec,
        encoder,
        encodings,
        x,
        y,
    }
}
