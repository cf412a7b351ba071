//! Synthetic scenarios with a known growth rule, used as ground truth.
//!
//! A cell is built-up at `t + 1` iff it is built-up at `t`, or it has at
//! least `min_neighbors` built-up Moore neighbors at `t` (off-grid counts as
//! non built-up) and its normalized band-0 value exceeds `theta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{BuiltUpMap, RasterGrid, BUILT, NON_BUILT};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub width: usize,
    pub height: usize,
    pub min_neighbors: usize,
    /// Development threshold on band 0, in normalized `[-1, 1]` units.
    pub theta: f64,
    /// Number of transitions; the sequence holds `steps + 1` maps.
    pub steps: usize,
    pub seed: u64,
    /// Box-filter passes applied to the raw noise.
    pub smoothing: usize,
    /// Fraction of cells built-up in the initial map.
    pub initial_fraction: f64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        SynthScenario {
            width: 128,
            height: 128,
            min_neighbors: 2,
            theta: -0.2,
            steps: 2,
            seed: 7,
            smoothing: 6,
            initial_fraction: 0.3,
        }
    }
}

pub const BANDS: usize = 3;
const LOW: f64 = 16.0;
const HIGH: f64 = 239.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub raster: RasterGrid,
    pub maps: Vec<BuiltUpMap>,
}

fn smooth_field<R: Rng>(rng: &mut R, width: usize, height: usize, passes: usize) -> Vec<f64> {
    let mut field: Vec<f64> = (0..width * height).map(|_| rng.gen::<f64>()).collect();
    let mut next = vec![0.0; field.len()];
    for _ in 0..passes {
        for r in 0..height {
            for c in 0..width {
                let mut sum = 0.0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let rr = (r as isize + dr).clamp(0, height as isize - 1) as usize;
                        let cc = (c as isize + dc).clamp(0, width as isize - 1) as usize;
                        sum += field[rr * width + cc];
                    }
                }
                next[r * width + c] = sum / 9.0;
            }
        }
        std::mem::swap(&mut field, &mut next);
    }
    field
}

fn rescale(field: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let min = field.iter().copied().fold(f64::INFINITY, f64::min);
    let max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if max > min { max - min } else { 1.0 };
    field.iter().map(|v| lo + (v - min) / span * (hi - lo)).collect()
}

/// Built-up Moore neighbors of `(r, c)`, off-grid counted as non built-up.
pub fn built_neighbors(map: &BuiltUpMap, r: usize, c: usize) -> usize {
    let (w, h) = (map.width() as isize, map.height() as isize);
    let mut n = 0;
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            if rr >= 0 && cc >= 0 && rr < h && cc < w && map.labels()[(rr * w + cc) as usize] == BUILT {
                n += 1;
            }
        }
    }
    n
}

/// Normalized band-0 value of every cell, exactly as the pipeline sees it.
pub fn band0_normalized(raster: &RasterGrid) -> Vec<f64> {
    let scale = 2.0 / f64::from(raster.maxval());
    raster
        .values()
        .chunks(raster.bands())
        .map(|px| f64::from(px[0]) * scale - 1.0)
        .collect()
}

/// Applies the growth rule once.
pub fn apply_rule(map: &BuiltUpMap, band0: &[f64], min_neighbors: usize, theta: f64) -> BuiltUpMap {
    let w = map.width();
    let labels = (0..map.cells())
        .map(|i| {
            let grows = || built_neighbors(map, i / w, i % w) >= min_neighbors && band0[i] > theta;
            if map.labels()[i] == BUILT || grows() {
                BUILT
            } else {
                NON_BUILT
            }
        })
        .collect();
    BuiltUpMap::new(w, map.height(), labels).expect("labels are ±1")
}

pub fn generate(s: &SynthScenario) -> Result<SynthOutput> {
    if s.width == 0 || s.height == 0 {
        return Err(Error::invalid("scenario grid must be non-empty"));
    }
    if s.steps < 2 {
        return Err(Error::invalid("scenario needs at least 2 steps"));
    }
    if !(0.0..1.0).contains(&s.initial_fraction) {
        return Err(Error::invalid("initial built-up fraction must be in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let n = s.width * s.height;
    let bands: Vec<Vec<f64>> = (0..BANDS)
        .map(|_| rescale(&smooth_field(&mut rng, s.width, s.height, s.smoothing), LOW, HIGH))
        .collect();
    let mut values = Vec::with_capacity(n * BANDS);
    for i in 0..n {
        for band in &bands {
            values.push(band[i].round() as u16);
        }
    }
    let raster = RasterGrid::new(s.width, s.height, BANDS, 255, values)?;
    let band0 = band0_normalized(&raster);
    if !band0.iter().any(|&v| v > s.theta) {
        return Err(Error::invalid(format!(
            "degenerate scenario: no cell has band 0 above theta {}",
            s.theta
        )));
    }

    let seed_field = smooth_field(&mut rng, s.width, s.height, s.smoothing);
    let mut sorted = seed_field.clone();
    sorted.sort_by(f64::total_cmp);
    let built_cells = ((n as f64) * s.initial_fraction).round().max(1.0) as usize;
    let cut = sorted[n - built_cells.min(n)];
    let labels = seed_field
        .iter()
        .map(|&v| if v >= cut { BUILT } else { NON_BUILT })
        .collect();
    let mut maps = vec![BuiltUpMap::new(s.width, s.height, labels)?];
    for _ in 0..s.steps {
        let next = apply_rule(maps.last().expect("non-empty"), &band0, s.min_neighbors, s.theta);
        maps.push(next);
    }
    Ok(SynthOutput { raster, maps })
}

/// Fraction of cells whose label changes between consecutive maps.
pub fn imbalance_of(maps: &[BuiltUpMap]) -> Vec<f64> {
    maps.windows(2)
        .map(|w| {
            let changed = w[0].labels().iter().zip(w[1].labels()).filter(|(a, b)| a != b).count();
            changed as f64 / w[0].cells().max(1) as f64
        })
        .collect()
}
