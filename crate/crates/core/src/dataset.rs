//! Data and label matrix construction.
//!
//! Each grid cell yields one feature row
//! `[l_p, N(l_p)..., encode(R_p, N(R_p))...]` and one transition label.
//! Rows follow row-major cell order so predictions reshape straight back into
//! maps.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoder::Autoencoder;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::raster::{BuiltUpMap, Cell, NeighborhoodSpec, NormalizedRaster, BUILT, NON_BUILT};

/// Transition indicator between two consecutive built-up maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum TransitionClass {
    /// Non built-up stays non built-up.
    Persist = 0,
    /// Built-up stays built-up.
    BuiltPersist = 1,
    /// Non built-up becomes built-up.
    Urbanize = 2,
    /// Built-up becomes non built-up.
    Deurbanize = 3,
}

pub const NUM_CLASSES: usize = 4;

impl TransitionClass {
    pub const ALL: [TransitionClass; NUM_CLASSES] = [
        TransitionClass::Persist,
        TransitionClass::BuiltPersist,
        TransitionClass::Urbanize,
        TransitionClass::Deurbanize,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Built-up label after the transition: `+1` for codes 1 and 2.
    pub fn next_label(self) -> i8 {
        match self {
            TransitionClass::BuiltPersist | TransitionClass::Urbanize => BUILT,
            TransitionClass::Persist | TransitionClass::Deurbanize => NON_BUILT,
        }
    }
}

impl fmt::Display for TransitionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TransitionClass::Persist => "NB->NB",
            TransitionClass::BuiltPersist => "B->B",
            TransitionClass::Urbanize => "NB->B",
            TransitionClass::Deurbanize => "B->NB",
        };
        f.write_str(name)
    }
}

pub type LabelVector = Vec<TransitionClass>;

/// With `merge_bnb`, built-up to non built-up is folded into built-up persistence.
pub fn label_transition(l_t: i8, l_t1: i8, merge_bnb: bool) -> TransitionClass {
    match (l_t == BUILT, l_t1 == BUILT) {
        (false, false) => TransitionClass::Persist,
        (true, true) => TransitionClass::BuiltPersist,
        (false, true) => TransitionClass::Urbanize,
        (true, false) if merge_bnb => TransitionClass::BuiltPersist,
        (true, false) => TransitionClass::Deurbanize,
    }
}

/// Feature matrix plus its column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: Matrix,
    pub neighbors: usize,
    pub code_len: usize,
}

impl FeatureMatrix {
    pub fn width(neighbors: usize, code_len: usize) -> usize {
        1 + neighbors + code_len
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["l0".to_string()];
        h.extend((1..=self.neighbors).map(|i| format!("n{i}")));
        h.extend((1..=self.code_len).map(|i| format!("e{i}")));
        h
    }
}

/// One window vector per cell: the autoencoder's training input.
pub fn neighborhood_matrix(r: &NormalizedRaster, spec: &NeighborhoodSpec) -> Matrix {
    let width = r.window_len(spec);
    let mut m = Matrix::zeros(r.cells(), width);
    m.data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each_init(Vec::new, |buf, (i, dst)| {
            buf.clear();
            r.window_into(Cell::new(i / r.width(), i % r.width()), spec, buf)
                .expect("row-major index is inside the grid");
            dst.copy_from_slice(buf);
        });
    m
}

/// Per-cell neighborhood encodings; the raster is fixed, so callers can
/// compute this once and reuse it.
pub fn encode_raster(r: &NormalizedRaster, enc: &Autoencoder, spec: &NeighborhoodSpec) -> Result<Matrix> {
    let expected = r.window_len(spec);
    if enc.input_width() != expected {
        return Err(Error::Width {
            expected,
            actual: enc.input_width(),
        });
    }
    enc.encode_rows(&neighborhood_matrix(r, spec))
}

/// Writes the feature row of `cell` into `out`.
pub(crate) fn fill_row(b: &BuiltUpMap, encodings: &Matrix, cell: Cell, spec: &NeighborhoodSpec, out: &mut Vec<f64>) {
    out.clear();
    b.window_into(cell, spec, out)
        .expect("row-major index is inside the grid");
    out.extend_from_slice(encodings.row(cell.row * b.width() + cell.col));
}

/// Feature matrix for map `b` given precomputed encodings.
pub fn feature_matrix(b: &BuiltUpMap, encodings: &Matrix, spec: &NeighborhoodSpec) -> Result<FeatureMatrix> {
    if encodings.rows() != b.cells() {
        return Err(Error::dims(
            format!("{} encoding rows", b.cells()),
            format!("{} encoding rows", encodings.rows()),
        ));
    }
    let code_len = encodings.cols();
    let width = FeatureMatrix::width(spec.size(), code_len);
    let mut m = Matrix::zeros(b.cells(), width);
    m.data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each_init(Vec::new, |buf, (i, dst)| {
            fill_row(b, encodings, Cell::new(i / b.width(), i % b.width()), spec, buf);
            dst.copy_from_slice(buf);
        });
    Ok(FeatureMatrix {
        matrix: m,
        neighbors: spec.size(),
        code_len,
    })
}

pub fn transition_labels(b_t: &BuiltUpMap, b_t1: &BuiltUpMap, merge_bnb: bool) -> Result<LabelVector> {
    if !b_t1.same_shape(b_t.width(), b_t.height()) {
        return Err(Error::dims(
            format!("{}x{}", b_t.width(), b_t.height()),
            format!("{}x{}", b_t1.width(), b_t1.height()),
        ));
    }
    Ok(b_t
        .labels()
        .iter()
        .zip(b_t1.labels())
        .map(|(&a, &b)| label_transition(a, b, merge_bnb))
        .collect())
}

/// Builds the data and label matrices for the interval `b_t -> b_t1`.
pub fn build_matrices(
    b_t: &BuiltUpMap,
    b_t1: &BuiltUpMap,
    r: &NormalizedRaster,
    enc: &Autoencoder,
    spec: &NeighborhoodSpec,
    merge_bnb: bool,
) -> Result<(FeatureMatrix, LabelVector)> {
    if !b_t.same_shape(r.width(), r.height()) {
        return Err(Error::dims(
            format!("{}x{} (raster)", r.width(), r.height()),
            format!("{}x{} (built-up)", b_t.width(), b_t.height()),
        ));
    }
    let labels = transition_labels(b_t, b_t1, merge_bnb)?;
    let encodings = encode_raster(r, enc, spec)?;
    let features = feature_matrix(b_t, &encodings, spec)?;
    Ok((features, labels))
}

/// Row counts per transition class, indexed by class code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts(pub [usize; NUM_CLASSES]);

impl ClassCounts {
    pub fn get(&self, class: TransitionClass) -> usize {
        self.0[class as usize]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Cells whose built-up state changed (codes 2 and 3).
    pub fn transformed(&self) -> usize {
        self.0[2] + self.0[3]
    }

    pub fn persistent(&self) -> usize {
        self.0[0] + self.0[1]
    }
}

pub fn class_histogram(y: &[TransitionClass]) -> ClassCounts {
    let mut counts = [0usize; NUM_CLASSES];
    for c in y {
        counts[*c as usize] += 1;
    }
    ClassCounts(counts)
}

/// Assignment of rows to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Row indices of fold `f` (held out) and of the remaining folds.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut test = Vec::new();
        let mut train = Vec::new();
        for (row, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                test.push(row);
            } else {
                train.push(row);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check_fold_args(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("fold count {k} exceeds row count {n}")));
    }
    Ok(())
}

/// Uniform random partition: shuffle rows, then deal them round-robin.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_fold_args(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan { k, assignment, seed })
}

/// Stratified variant: each class is shuffled and dealt round-robin,
/// continuing the rotation across classes so fold sizes stay balanced.
pub fn make_stratified_folds(labels: &[TransitionClass], k: usize, seed: u64) -> Result<FoldPlan> {
    check_fold_args(labels.len(), k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in TransitionClass::ALL {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for row in rows {
            assignment[row] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { k, assignment, seed })
}

/// CSV dump with header `l0,n1..nN,e1..eLen,label`.
pub fn write_matrix_csv(path: impl AsRef<Path>, x: &FeatureMatrix, y: &[TransitionClass]) -> Result<()> {
    let path = path.as_ref();
    if x.rows() != y.len() {
        return Err(Error::dims(
            format!("{} labels", x.rows()),
            format!("{} labels", y.len()),
        ));
    }
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    let mut header = x.header();
    header.push("label".into());
    w.write_record(&header).map_err(to_err)?;
    let mut record = Vec::with_capacity(x.cols() + 1);
    for (row, label) in x.matrix.iter_rows().zip(y) {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        record.push(label.code().to_string());
        w.write_record(&record).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(FeatureMatrix, LabelVector)> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut r = csv::Reader::from_path(path).map_err(to_err)?;
    let header = r.headers().map_err(to_err)?.clone();
    let neighbors = header.iter().filter(|h| h.starts_with('n')).count();
    let code_len = header.iter().filter(|h| h.starts_with('e')).count();
    let width = FeatureMatrix::width(neighbors, code_len);
    if header.len() != width + 1 || header.get(width) != Some("label") {
        return Err(Error::invalid(format!("{}: unexpected matrix header", path.display())));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(to_err)?;
        let bad = || Error::invalid(format!("{}: bad value on data row {}", path.display(), line + 1));
        for field in rec.iter().take(width) {
            data.push(field.parse::<f64>().map_err(|_| bad())?);
        }
        let code: u8 = rec.get(width).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        labels.push(TransitionClass::from_code(code).ok_or_else(bad)?);
    }
    let matrix = Matrix::from_vec(labels.len(), width, data)?;
    Ok((
        FeatureMatrix {
            matrix,
            neighbors,
            code_len,
        },
        labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{normalize, RasterGrid};

    #[test]
    fn transition_codes() {
        assert_eq!(label_transition(-1, -1, true), TransitionClass::Persist);
        assert_eq!(label_transition(1, 1, true), TransitionClass::BuiltPersist);
        assert_eq!(label_transition(-1, 1, true), TransitionClass::Urbanize);
        assert_eq!(label_transition(1, -1, true), TransitionClass::BuiltPersist);
        assert_eq!(label_transition(1, -1, false), TransitionClass::Deurbanize);
        assert_eq!(TransitionClass::Urbanize.code(), 2);
    }

    #[test]
    fn column_count_for_moore_three_band() {
        let raster = normalize(&RasterGrid::new(4, 3, 3, 255, (0..36).map(|v| v * 7).collect()).unwrap()).unwrap();
        let spec = NeighborhoodSpec::default();
        let enc = Autoencoder::new(27, 5, &[16], 1).unwrap();
        let b = BuiltUpMap::filled(4, 3, -1).unwrap();
        let (x, y) = build_matrices(&b, &b, &raster, &enc, &spec, true).unwrap();
        assert_eq!(x.cols(), 14);
        assert_eq!(x.rows(), 12);
        assert_eq!(y.len(), 12);
        for row in x.matrix.iter_rows() {
            assert!(row[..9].iter().all(|&v| v == 1.0 || v == -1.0));
            assert!(row[9..].iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn build_rejects_mismatches() {
        let raster = normalize(&RasterGrid::new(2, 2, 1, 255, vec![0; 4]).unwrap()).unwrap();
        let spec = NeighborhoodSpec::default();
        let b = BuiltUpMap::filled(2, 2, -1).unwrap();
        let wrong = Autoencoder::new(27, 5, &[16], 1).unwrap();
        assert!(matches!(
            build_matrices(&b, &b, &raster, &wrong, &spec, true),
            Err(Error::Width {
                expected: 9,
                actual: 27
            })
        ));
        let enc = Autoencoder::new(9, 3, &[6], 1).unwrap();
        let other = BuiltUpMap::filled(3, 2, -1).unwrap();
        assert!(build_matrices(&b, &other, &raster, &enc, &spec, true).is_err());
        assert!(build_matrices(&other, &other, &raster, &enc, &spec, true).is_err());
    }

    #[test]
    fn histogram_counts() {
        let y = vec![TransitionClass::Persist; 7];
        assert_eq!(class_histogram(&y).0, [7, 0, 0, 0]);
        let y = vec![
            TransitionClass::Urbanize,
            TransitionClass::Persist,
            TransitionClass::Urbanize,
            TransitionClass::Deurbanize,
        ];
        let h = class_histogram(&y);
        assert_eq!(h.0, [1, 0, 2, 1]);
        assert_eq!((h.transformed(), h.persistent(), h.total()), (3, 1, 4));
    }

    #[test]
    fn folds_are_balanced_and_reproducible() {
        let plan = make_folds(10, 10, 1).unwrap();
        assert!(plan.fold_sizes().iter().all(|&s| s == 1));
        let plan = make_folds(103, 10, 7).unwrap();
        let sizes = plan.fold_sizes();
        assert!(sizes.iter().all(|&s| s == 10 || s == 11));
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert_eq!(make_folds(103, 10, 7).unwrap(), plan);
        assert_ne!(make_folds(103, 10, 8).unwrap(), plan);
        assert!(make_folds(5, 6, 0).is_err());
        assert!(make_folds(5, 1, 0).is_err());
        let (train, test) = plan.split(3);
        assert_eq!(train.len() + test.len(), 103);
    }

    #[test]
    fn stratified_folds_spread_each_class() {
        let mut labels = vec![TransitionClass::Persist; 90];
        labels.extend(vec![TransitionClass::Urbanize; 10]);
        let plan = make_stratified_folds(&labels, 10, 3).unwrap();
        for f in 0..10 {
            let (_, test) = plan.split(f);
            assert_eq!(test.len(), 10);
            assert_eq!(
                test.iter().filter(|&&i| labels[i] == TransitionClass::Urbanize).count(),
                1
            );
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let x = FeatureMatrix {
            matrix: Matrix::from_rows(&[[1.0, -1.0, 0.123456789012345], [-1.0, 1.0, -0.5]]).unwrap(),
            neighbors: 1,
            code_len: 1,
        };
        let y = vec![TransitionClass::Urbanize, TransitionClass::Persist];
        write_matrix_csv(&path, &x, &y).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("l0,n1,e1,label\n"));
        let (x2, y2) = read_matrix_csv(&path).unwrap();
        assert_eq!(x2, x);
        assert_eq!(y2, y);
    }
}
