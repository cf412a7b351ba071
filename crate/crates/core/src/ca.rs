//! Synchronous cellular automaton driven by a learned transition model.
//!
//! A cell's next state depends on its label, its neighbors' labels and the
//! encoding of its raster neighborhood. All cells read the old map; the new
//! label is built-up exactly when the predicted transition is `B->B` or
//! `NB->B`.

use rayon::prelude::*;

use crate::dataset::{encode_raster, fill_row, FeatureMatrix, TransitionClass};
use crate::encoder::Autoencoder;
use crate::error::{Error, Result};
use crate::knowledge::TransitionModel;
use crate::matrix::Matrix;
use crate::raster::{BuiltUpMap, Cell, NeighborhoodSpec, NormalizedRaster, RasterGrid};

/// State of one cell: its built-up label and the transition that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellState {
    pub label: i8,
    pub transition: TransitionClass,
}

impl From<TransitionClass> for CellState {
    fn from(transition: TransitionClass) -> Self {
        CellState {
            label: transition.next_label(),
            transition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionGrid {
    width: usize,
    height: usize,
    codes: Vec<TransitionClass>,
}

impl TransitionGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[TransitionClass] {
        &self.codes
    }

    /// Grayscale rendering with codes 0..3 scaled to `{0, 85, 170, 255}`.
    pub fn to_grid(&self) -> RasterGrid {
        let values = self.codes.iter().map(|c| u16::from(c.code()) * 85).collect();
        RasterGrid::new(self.width, self.height, 1, 255, values).expect("codes scale into 0..=255")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub map: BuiltUpMap,
    pub transitions: TransitionGrid,
}

/// A start map and the maps produced by each successive step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationRun {
    pub start: BuiltUpMap,
    pub steps: Vec<StepOutput>,
}

impl SimulationRun {
    pub fn last_map(&self) -> &BuiltUpMap {
        self.steps.last().map_or(&self.start, |s| &s.map)
    }
}

/// Transition model bound to a frozen raster. Raster encodings are computed
/// once at construction and reused for every step.
pub struct Automaton<'a> {
    model: &'a TransitionModel,
    spec: &'a NeighborhoodSpec,
    encodings: Matrix,
    width: usize,
    height: usize,
}

impl<'a> Automaton<'a> {
    pub fn new(
        raster: &NormalizedRaster,
        model: &'a TransitionModel,
        enc: &Autoencoder,
        spec: &'a NeighborhoodSpec,
    ) -> Result<Self> {
        let expected = FeatureMatrix::width(spec.size(), enc.code_len());
        if model.feature_width() != expected {
            return Err(Error::Width {
                expected,
                actual: model.feature_width(),
            });
        }
        Ok(Automaton {
            model,
            spec,
            encodings: encode_raster(raster, enc, spec)?,
            width: raster.width(),
            height: raster.height(),
        })
    }

    pub fn from_encodings(
        encodings: Matrix,
        width: usize,
        height: usize,
        model: &'a TransitionModel,
        spec: &'a NeighborhoodSpec,
    ) -> Result<Self> {
        let expected = FeatureMatrix::width(spec.size(), encodings.cols());
        if model.feature_width() != expected {
            return Err(Error::Width {
                expected,
                actual: model.feature_width(),
            });
        }
        if encodings.rows() != width * height {
            return Err(Error::dims(width * height, encodings.rows()));
        }
        Ok(Automaton {
            model,
            spec,
            encodings,
            width,
            height,
        })
    }

    fn check_map(&self, b: &BuiltUpMap) -> Result<()> {
        if !b.same_shape(self.width, self.height) {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", b.width(), b.height()),
            ));
        }
        Ok(())
    }

    fn transition_at(&self, b: &BuiltUpMap, i: usize, buf: &mut Vec<f64>) -> TransitionClass {
        fill_row(
            b,
            &self.encodings,
            Cell::new(i / self.width, i % self.width),
            self.spec,
            buf,
        );
        self.model.predict_unchecked(buf)
    }

    fn assemble(&self, codes: Vec<TransitionClass>) -> StepOutput {
        let labels = codes.iter().map(|c| c.next_label()).collect();
        StepOutput {
            map: BuiltUpMap::new(self.width, self.height, labels).expect("labels are ±1"),
            transitions: TransitionGrid {
                width: self.width,
                height: self.height,
                codes,
            },
        }
    }

    /// One synchronous update of every cell.
    pub fn step(&self, b: &BuiltUpMap) -> Result<StepOutput> {
        self.check_map(b)?;
        let codes: Vec<TransitionClass> = (0..b.cells())
            .into_par_iter()
            .map_init(Vec::new, |buf, i| self.transition_at(b, i, buf))
            .collect();
        Ok(self.assemble(codes))
    }

    /// Sequential update that visits cells in `order`. The result does not
    /// depend on the order; this exists to check exactly that.
    pub fn step_in_order(&self, b: &BuiltUpMap, order: &[usize]) -> Result<StepOutput> {
        self.check_map(b)?;
        let mut seen = vec![false; b.cells()];
        if order.len() != b.cells()
            || order
                .iter()
                .any(|&i| i >= b.cells() || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::invalid("visitation order must be a permutation of the cells"));
        }
        let mut codes = vec![TransitionClass::Persist; b.cells()];
        let mut buf = Vec::new();
        for &i in order {
            codes[i] = self.transition_at(b, i, &mut buf);
        }
        Ok(self.assemble(codes))
    }

    /// Recurrent simulation: each step consumes the previous step's map.
    pub fn simulate(&self, start: &BuiltUpMap, steps: usize) -> Result<SimulationRun> {
        if steps == 0 {
            return Err(Error::invalid("simulation needs at least one step"));
        }
        let mut outputs: Vec<StepOutput> = Vec::with_capacity(steps);
        for _ in 0..steps {
            let prev = outputs.last().map_or(start, |s| &s.map);
            let next = self.step(prev)?;
            outputs.push(next);
        }
        Ok(SimulationRun {
            start: start.clone(),
            steps: outputs,
        })
    }
}

pub fn step(
    b_t: &BuiltUpMap,
    raster: &NormalizedRaster,
    model: &TransitionModel,
    enc: &Autoencoder,
    spec: &NeighborhoodSpec,
) -> Result<StepOutput> {
    Automaton::new(raster, model, enc, spec)?.step(b_t)
}

pub fn simulate(
    b_0: &BuiltUpMap,
    raster: &NormalizedRaster,
    model: &TransitionModel,
    enc: &Autoencoder,
    spec: &NeighborhoodSpec,
    steps: usize,
) -> Result<SimulationRun> {
    Automaton::new(raster, model, enc, spec)?.simulate(b_0, steps)
}
