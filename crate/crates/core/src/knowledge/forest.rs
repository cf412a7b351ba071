use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{argmax_class, categorical_columns, DecisionTree, MaxFeatures, TreeParams};
use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::{TransitionClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    /// Draw `n` rows with replacement per tree; otherwise every tree sees all rows.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

/// Bagged CART ensemble with majority voting.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Per-tree seeds are drawn up front, so the result does not depend on
    /// how rayon schedules the trees.
    pub fn fit(x: &Matrix, y: &[TransitionClass], params: &ForestParams, seed: u64) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if x.rows() == 0 {
            return Err(Error::invalid("cannot grow a forest on an empty dataset"));
        }
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.gen()).collect();
        let categorical = categorical_columns(x);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: params.max_features,
        };
        let n = x.rows();
        let trees = seeds
            .par_iter()
            .map(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_indices(x, y, &mut idx, &categorical, &tree_params, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomForest { trees })
    }

    pub fn from_trees(trees: Vec<DecisionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        Ok(RandomForest { trees })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn feature_width(&self) -> usize {
        self.trees[0].feature_width()
    }

    /// One vote per tree, indexed by class code.
    pub fn votes(&self, x: &[f64]) -> [u32; NUM_CLASSES] {
        let mut v = [0u32; NUM_CLASSES];
        for t in &self.trees {
            v[t.predict_row(x) as usize] += 1;
        }
        v
    }

    /// Majority vote; ties go to the lowest class code.
    pub fn predict_row(&self, x: &[f64]) -> TransitionClass {
        argmax_class(&self.votes(x))
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.u32(self.trees.len() as u32);
        for t in &self.trees {
            t.write(w);
        }
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let n = r.u32()? as usize;
        let trees = (0..n).map(|_| DecisionTree::read(r)).collect::<Result<Vec<_>>>()?;
        Self::from_trees(trees)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TransitionClass::*;

    fn toy() -> (Matrix, Vec<TransitionClass>) {
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = if i % 3 == 0 { 1.0 } else { -1.0 };
                [a, b, (i as f64 * 0.11).cos()]
            })
            .collect();
        let y = rows
            .iter()
            .map(|r| {
                if r[0] > 0.2 {
                    Urbanize
                } else if r[1] > 0.0 {
                    BuiltPersist
                } else {
                    Persist
                }
            })
            .collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn degenerate_forest_equals_tree() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        let forest = RandomForest::fit(&x, &y, &params, 11).unwrap();
        let tree = DecisionTree::fit(&x, &y, &TreeParams::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(forest.trees()[0], tree);
        for row in x.iter_rows() {
            assert_eq!(forest.predict_row(row), tree.predict_row(row));
        }
    }

    #[test]
    fn single_class_is_constant() {
        let (x, _) = toy();
        let y = vec![BuiltPersist; x.rows()];
        let forest = RandomForest::fit(
            &x,
            &y,
            &ForestParams {
                n_trees: 5,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert!(x.iter_rows().all(|r| forest.predict_row(r) == BuiltPersist));
    }

    #[test]
    fn votes_sum_to_tree_count_and_identical_trees_agree() {
        let (x, y) = toy();
        let forest = RandomForest::fit(
            &x,
            &y,
            &ForestParams {
                n_trees: 7,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        for row in x.iter_rows() {
            assert_eq!(forest.votes(row).iter().sum::<u32>(), 7);
        }
        let tree = forest.trees()[0].clone();
        let clones = RandomForest::from_trees(vec![tree.clone(); 4]).unwrap();
        for row in x.iter_rows() {
            assert_eq!(clones.predict_row(row), tree.predict_row(row));
        }
    }

    #[test]
    fn seeded_fit_is_reproducible() {
        let (x, y) = toy();
        let p = ForestParams {
            n_trees: 9,
            ..Default::default()
        };
        assert_eq!(
            RandomForest::fit(&x, &y, &p, 5).unwrap(),
            RandomForest::fit(&x, &y, &p, 5).unwrap()
        );
    }
}
