//! Transition-rule learners: CART, random forest, logistic regression,
//! Gaussian naive Bayes and MLP behind one [`TransitionModel`] type.

mod forest;
mod gnb;
mod logreg;
mod mlp;
mod tree;

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use forest::{ForestParams, RandomForest};
pub use gnb::{GaussianNb, VAR_FLOOR_RATIO};
pub use logreg::{LogRegParams, LogisticRegression};
pub use mlp::{MlpClassifier, MlpParams};
pub use tree::{gini, DecisionTree, MaxFeatures, Node, SplitRule, TreeParams};

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::TransitionClass;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"UCAM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    LogisticRegression,
    GaussianNb,
    Mlp,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::DecisionTree => 1,
            ModelKind::RandomForest => 2,
            ModelKind::LogisticRegression => 3,
            ModelKind::GaussianNb => 4,
            ModelKind::Mlp => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::GaussianNb => "gaussian_nb",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A trained transition function mapping a feature row to a transition class.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionModel {
    Tree(DecisionTree),
    Forest(RandomForest),
    LogReg(LogisticRegression),
    Gnb(GaussianNb),
    Mlp(MlpClassifier),
    /// Always returns the same class.
    Constant {
        class: TransitionClass,
        width: usize,
    },
}

impl TransitionModel {
    pub fn kind(&self) -> Option<ModelKind> {
        Some(match self {
            TransitionModel::Tree(_) => ModelKind::DecisionTree,
            TransitionModel::Forest(_) => ModelKind::RandomForest,
            TransitionModel::LogReg(_) => ModelKind::LogisticRegression,
            TransitionModel::Gnb(_) => ModelKind::GaussianNb,
            TransitionModel::Mlp(_) => ModelKind::Mlp,
            TransitionModel::Constant { .. } => return None,
        })
    }

    pub fn feature_width(&self) -> usize {
        match self {
            TransitionModel::Tree(m) => m.feature_width(),
            TransitionModel::Forest(m) => m.feature_width(),
            TransitionModel::LogReg(m) => m.feature_width(),
            TransitionModel::Gnb(m) => m.feature_width(),
            TransitionModel::Mlp(m) => m.feature_width(),
            TransitionModel::Constant { width, .. } => *width,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<TransitionClass> {
        if x.len() != self.feature_width() {
            return Err(Error::Width {
                expected: self.feature_width(),
                actual: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> TransitionClass {
        match self {
            TransitionModel::Tree(m) => m.predict_row(x),
            TransitionModel::Forest(m) => m.predict_row(x),
            TransitionModel::LogReg(m) => m.predict_row(x),
            TransitionModel::Gnb(m) => m.predict_row(x),
            TransitionModel::Mlp(m) => m.predict_row(x),
            TransitionModel::Constant { class, .. } => *class,
        }
    }

    /// Predicts every row of `x`, in parallel.
    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<TransitionClass>> {
        use rayon::prelude::*;
        if x.cols() != self.feature_width() {
            return Err(Error::Width {
                expected: self.feature_width(),
                actual: x.cols(),
            });
        }
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| self.predict_unchecked(x.row(i)))
            .collect())
    }

    fn classes(&self) -> Vec<TransitionClass> {
        match self {
            TransitionModel::LogReg(m) => m.classes().to_vec(),
            TransitionModel::Gnb(m) => m.classes().to_vec(),
            TransitionModel::Mlp(m) => m.classes().to_vec(),
            TransitionModel::Constant { class, .. } => vec![*class],
            TransitionModel::Tree(_) | TransitionModel::Forest(_) => Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u8(self.kind().map_or(0, ModelKind::tag));
        w.u32(self.feature_width() as u32);
        let classes = self.classes();
        w.u8(classes.len() as u8);
        classes.iter().for_each(|c| w.u8(c.code()));
        match self {
            TransitionModel::Tree(m) => m.write(&mut w),
            TransitionModel::Forest(m) => m.write(&mut w),
            TransitionModel::LogReg(m) => m.write(&mut w),
            TransitionModel::Gnb(m) => m.write(&mut w),
            TransitionModel::Mlp(m) => m.write(&mut w),
            TransitionModel::Constant { .. } => {}
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::ModelFormat("not a transition model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unknown model format version {version}")));
        }
        let tag = r.u8()?;
        let width = r.u32()? as usize;
        let n_classes = r.u8()? as usize;
        let classes = (0..n_classes)
            .map(|_| {
                let code = r.u8()?;
                TransitionClass::from_code(code).ok_or_else(|| Error::ModelFormat(format!("unknown class code {code}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let model = match tag {
            0 => {
                let class = *classes
                    .first()
                    .ok_or_else(|| Error::ModelFormat("constant model without a class".into()))?;
                TransitionModel::Constant { class, width }
            }
            1 => TransitionModel::Tree(DecisionTree::read(&mut r)?),
            2 => TransitionModel::Forest(RandomForest::read(&mut r)?),
            3 => TransitionModel::LogReg(LogisticRegression::read(&mut r, classes)?),
            4 => TransitionModel::Gnb(GaussianNb::read(&mut r, classes)?),
            5 => TransitionModel::Mlp(MlpClassifier::read(&mut r, classes)?),
            other => return Err(Error::ModelFormat(format!("unknown model kind {other}"))),
        };
        if model.feature_width() != width {
            return Err(Error::ModelFormat("payload width disagrees with header".into()));
        }
        if !r.is_empty() {
            return Err(Error::ModelFormat("trailing bytes after model payload".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// One roster entry: which learner to train and with what settings.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainerSpec {
    Tree(TreeParams),
    Forest(ForestParams),
    LogReg(LogRegParams),
    Gnb,
    Mlp(MlpParams),
}

impl TrainerSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainerSpec::Tree(_) => ModelKind::DecisionTree,
            TrainerSpec::Forest(_) => ModelKind::RandomForest,
            TrainerSpec::LogReg(_) => ModelKind::LogisticRegression,
            TrainerSpec::Gnb => ModelKind::GaussianNb,
            TrainerSpec::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn train(&self, x: &Matrix, y: &[TransitionClass], seed: u64) -> Result<TransitionModel> {
        if x.rows() == 0 {
            return Err(Error::invalid("cannot train on an empty dataset"));
        }
        if x.rows() != y.len() {
            return Err(Error::dims(
                format!("{} labels", x.rows()),
                format!("{} labels", y.len()),
            ));
        }
        Ok(match self {
            TrainerSpec::Tree(p) => {
                TransitionModel::Tree(DecisionTree::fit(x, y, p, &mut ChaCha8Rng::seed_from_u64(seed))?)
            }
            TrainerSpec::Forest(p) => TransitionModel::Forest(RandomForest::fit(x, y, p, seed)?),
            TrainerSpec::LogReg(p) => TransitionModel::LogReg(LogisticRegression::fit(x, y, p, seed)?),
            TrainerSpec::Gnb => TransitionModel::Gnb(GaussianNb::fit(x, y)?),
            TrainerSpec::Mlp(p) => TransitionModel::Mlp(MlpClassifier::fit(x, y, p, seed)?.0),
        })
    }
}

#[derive(Debug)]
pub struct TrainedEntry {
    pub kind: ModelKind,
    pub model: Result<TransitionModel>,
    pub train_seconds: f64,
}

/// Trains every roster entry on `(x, y)`; a failing entry is reported in its
/// slot and does not stop the others.
pub fn train_all(x: &Matrix, y: &[TransitionClass], roster: &[TrainerSpec], seed: u64) -> Result<Vec<TrainedEntry>> {
    if roster.is_empty() {
        return Err(Error::invalid("classifier roster is empty"));
    }
    Ok(roster
        .iter()
        .map(|spec| {
            let start = Instant::now();
            let model = spec.train(x, y, seed);
            let train_seconds = start.elapsed().as_secs_f64();
            if let Err(e) = &model {
                log::warn!("{} failed to train: {e}", spec.kind());
            }
            TrainedEntry {
                kind: spec.kind(),
                model,
                train_seconds,
            }
        })
        .collect())
}
