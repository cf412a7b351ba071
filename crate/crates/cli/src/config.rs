//! Run configuration, read from a TOML file with CLI overrides.
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urbanca::encoder::{default_hidden, TrainParams};
use urbanca::knowledge::{ForestParams, LogRegParams, MaxFeatures, MlpParams, TrainerSpec, TreeParams};
use urbanca::nn::Activation;
use urbanca::raster::{NeighborhoodKind, NeighborhoodSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub merge_bnb: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub stratified_folds: bool,
    pub paths: Paths,
    #[serde(default)]
    pub neighborhood: NeighborhoodConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default = "default_roster")]
    pub roster: Vec<RosterEntry>,
    #[serde(default)]
    pub timeline: Timeline,
}

fn yes() -> bool {
    true
}

fn default_folds() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub raster: PathBuf,
    pub builtup_t: PathBuf,
    pub builtup_t1: PathBuf,
    /// Map one interval after `builtup_t1`, used to score predictions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtup_t2: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodConfig {
    pub kind: String,
    pub radius: usize,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        NeighborhoodConfig {
            kind: "moore".into(),
            radius: 1,
        }
    }
}

impl NeighborhoodConfig {
    pub fn spec(&self) -> CliResult<NeighborhoodSpec> {
        let kind = match self.kind.as_str() {
            "moore" => NeighborhoodKind::Moore,
            "von_neumann" => NeighborhoodKind::VonNeumann,
            other => return Err(CliError::Config(format!("unknown neighborhood kind '{other}'"))),
        };
        Ok(NeighborhoodSpec::new(kind, self.radius)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub len: usize,
    /// Hidden widths between input and code; empty picks `ceil((in + len) / 2)`.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "tanh")]
    pub activation: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

fn tanh() -> String {
    "tanh".into()
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let p = TrainParams::default();
        EncoderConfig {
            len: 10,
            hidden: Vec::new(),
            activation: tanh(),
            epochs: p.epochs,
            batch_size: p.batch_size,
            lr: p.lr,
        }
    }
}

impl EncoderConfig {
    pub fn hidden_for(&self, input_width: usize) -> Vec<usize> {
        if self.hidden.is_empty() {
            default_hidden(input_width, self.len)
        } else {
            self.hidden.clone()
        }
    }

    pub fn activation(&self) -> CliResult<Activation> {
        Ok(self.activation.parse()?)
    }

    pub fn train_params(&self, seed: u64) -> TrainParams {
        TrainParams {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed,
        }
    }
}

/// Calendar bookkeeping: `year_t` labels `builtup_t`; one step spans
/// `years_per_step` years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timeline {
    pub year_t: i32,
    pub years_per_step: i32,
    /// Map that `simulate` starts from.
    #[serde(default)]
    pub start: StartMap,
}

impl Default for Timeline {
    fn default() -> Self {
        Timeline {
            year_t: 0,
            years_per_step: 10,
            start: StartMap::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMap {
    /// `builtup_t`, labeled `year_t`.
    #[default]
    T,
    /// `builtup_t1`, labeled `year_t + years_per_step`.
    T1,
}

impl Timeline {
    pub fn start_year(&self) -> i32 {
        match self.start {
            StartMap::T => self.year_t,
            StartMap::T1 => self.year_t + self.years_per_step,
        }
    }

    /// Calendar year reached after `step` steps (1-based).
    pub fn year_after(&self, step: usize) -> i32 {
        self.start_year() + self.years_per_step * step as i32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RosterEntry {
    DecisionTree {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_depth: Option<usize>,
        #[serde(default = "one")]
        min_leaf: usize,
    },
    RandomForest {
        #[serde(default = "hundred")]
        n_trees: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_depth: Option<usize>,
        #[serde(default = "one")]
        min_leaf: usize,
        /// `"sqrt"`, `"all"` or a number.
        #[serde(default = "sqrt")]
        max_features: String,
        #[serde(default = "yes")]
        bootstrap: bool,
    },
    LogisticRegression {
        #[serde(default = "unit")]
        l2: f64,
        #[serde(default = "thirty")]
        epochs: usize,
        #[serde(default = "tenth")]
        lr: f64,
        #[serde(default = "thirty_two")]
        batch_size: usize,
    },
    GaussianNb,
    Mlp {
        #[serde(default = "ten_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "hundredth")]
        lr: f64,
        #[serde(default = "momentum")]
        momentum: f64,
        #[serde(default = "hundred")]
        batch_size: usize,
        #[serde(default = "hundred")]
        epochs: usize,
        #[serde(default = "tanh")]
        activation: String,
    },
}

fn one() -> usize {
    1
}
fn hundred() -> usize {
    100
}
fn thirty() -> usize {
    30
}
fn thirty_two() -> usize {
    32
}
fn unit() -> f64 {
    1.0
}
fn tenth() -> f64 {
    0.1
}
fn hundredth() -> f64 {
    0.01
}
fn momentum() -> f64 {
    0.9
}
fn sqrt() -> String {
    "sqrt".into()
}
fn ten_hidden() -> Vec<usize> {
    vec![10]
}

pub fn default_roster() -> Vec<RosterEntry> {
    vec![
        RosterEntry::DecisionTree {
            max_depth: None,
            min_leaf: 1,
        },
        RosterEntry::RandomForest {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: sqrt(),
            bootstrap: true,
        },
    ]
}

/// Every setting in the published comparison grid: tree depths
/// {10, 100, 200, unlimited}, forests of {10, 100, 1000} trees, L2 strengths
/// spanning [0.01, 100], the five MLP hidden shapes, and naive Bayes.
pub fn grid_roster() -> Vec<RosterEntry> {
    let mut roster = Vec::new();
    for depth in [Some(10), Some(100), Some(200), None] {
        roster.push(RosterEntry::DecisionTree {
            max_depth: depth,
            min_leaf: 1,
        });
    }
    for n_trees in [10, 100, 1000] {
        roster.push(RosterEntry::RandomForest {
            n_trees,
            max_depth: None,
            min_leaf: 1,
            max_features: sqrt(),
            bootstrap: true,
        });
    }
    for l2 in [0.01, 0.1, 1.0, 10.0, 100.0] {
        roster.push(RosterEntry::LogisticRegression {
            l2,
            epochs: thirty(),
            lr: tenth(),
            batch_size: thirty_two(),
        });
    }
    roster.push(RosterEntry::GaussianNb);
    for hidden in [
        vec![10],
        vec![20, 15],
        vec![20, 15, 10],
        vec![20, 15, 10, 5],
        vec![20, 15, 10, 5, 3],
    ] {
        roster.push(RosterEntry::Mlp {
            hidden,
            lr: hundredth(),
            momentum: momentum(),
            batch_size: hundred(),
            epochs: hundred(),
            activation: tanh(),
        });
    }
    roster
}

impl RosterEntry {
    pub fn trainer(&self) -> CliResult<TrainerSpec> {
        Ok(match self {
            RosterEntry::DecisionTree { max_depth, min_leaf } => TrainerSpec::Tree(TreeParams {
                max_depth: *max_depth,
                min_leaf: *min_leaf,
                max_features: MaxFeatures::All,
            }),
            RosterEntry::RandomForest {
                n_trees,
                max_depth,
                min_leaf,
                max_features,
                bootstrap,
            } => TrainerSpec::Forest(ForestParams {
                n_trees: *n_trees,
                max_depth: *max_depth,
                min_leaf: *min_leaf,
                max_features: match max_features.as_str() {
                    "sqrt" => MaxFeatures::Sqrt,
                    "all" => MaxFeatures::All,
                    n => MaxFeatures::Count(n.parse().map_err(|_| {
                        CliError::Config(format!("max_features must be sqrt, all or a number, got '{n}'"))
                    })?),
                },
                bootstrap: *bootstrap,
            }),
            RosterEntry::LogisticRegression {
                l2,
                epochs,
                lr,
                batch_size,
            } => TrainerSpec::LogReg(LogRegParams {
                l2: *l2,
                epochs: *epochs,
                lr: *lr,
                batch_size: *batch_size,
            }),
            RosterEntry::GaussianNb => TrainerSpec::Gnb,
            RosterEntry::Mlp {
                hidden,
                lr,
                momentum,
                batch_size,
                epochs,
                activation,
            } => TrainerSpec::Mlp(MlpParams {
                hidden: hidden.clone(),
                activation: activation.parse()?,
                lr: *lr,
                momentum: *momentum,
                batch_size: *batch_size,
                epochs: *epochs,
            }),
        })
    }

    /// Short label such as `random_forest_100` or `decision_tree_depth10`.
    pub fn label(&self) -> String {
        match self {
            RosterEntry::DecisionTree { max_depth, .. } => match max_depth {
                Some(d) => format!("decision_tree_depth{d}"),
                None => "decision_tree".into(),
            },
            RosterEntry::RandomForest { n_trees, .. } => format!("random_forest_{n_trees}"),
            RosterEntry::LogisticRegression { l2, .. } => format!("logistic_regression_l2_{l2}"),
            RosterEntry::GaussianNb => "gaussian_nb".into(),
            RosterEntry::Mlp { hidden, .. } => format!(
                "mlp_{}",
                hidden.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
            ),
        }
    }
}

impl RunConfig {
    pub fn new(paths: Paths) -> Self {
        RunConfig {
            seed: 0,
            merge_bnb: true,
            folds: default_folds(),
            stratified_folds: false,
            paths,
            neighborhood: NeighborhoodConfig::default(),
            encoder: EncoderConfig::default(),
            roster: default_roster(),
            timeline: Timeline::default(),
        }
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Loads a config and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.encoder.len == 0 {
            return Err(CliError::Config("encoder.len must be positive".into()));
        }
        if !self.encoder.len.is_multiple_of(5) {
            log::warn!("encoding length {} is not a multiple of 5", self.encoder.len);
        }
        if self.folds < 2 {
            return Err(CliError::Config("folds must be at least 2".into()));
        }
        if self.roster.is_empty() {
            return Err(CliError::Config("roster is empty".into()));
        }
        for entry in &self.roster {
            entry.trainer()?;
        }
        self.encoder.activation()?;
        self.neighborhood.spec()?;
        Ok(())
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.raster);
        fix(&mut self.builtup_t);
        fix(&mut self.builtup_t1);
        if let Some(p) = &mut self.builtup_t2 {
            fix(p);
        }
        fix(&mut self.out_dir);
    }
}
