//! CART classification tree with Gini impurity.
//!
//! Columns whose training values are all `±1` (the built-up label columns)
//! get equality splits; every other column gets threshold splits at
//! midpoints between consecutive distinct values. Among equally good splits
//! the lowest feature index wins, then the lowest threshold.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::{TransitionClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `1 - sum (c_i / n)^2`.
pub fn gini(counts: &[usize]) -> Result<f64> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::invalid("gini impurity of an empty node"));
    }
    let n = n as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// `n * gini`, computed as `n - sum c^2 / n`.
fn weighted_gini(counts: &[u32; NUM_CLASSES], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum();
    f64::from(n) - sq / f64::from(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    /// `x <= t` goes left.
    Threshold(f64),
    /// `x == v` goes left.
    Equals(f64),
}

impl SplitRule {
    fn goes_left(self, v: f64) -> bool {
        match self {
            SplitRule::Threshold(t) => v <= t,
            SplitRule::Equals(e) => v == e,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        counts: [u32; NUM_CLASSES],
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    All,
    /// `ceil(sqrt(cols))`.
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, cols: usize) -> usize {
        match self {
            MaxFeatures::All => cols,
            MaxFeatures::Sqrt => ((cols as f64).sqrt().ceil() as usize).max(1),
            MaxFeatures::Count(n) => n.clamp(1, cols.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// `None` grows until purity or `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// Pre-order: the root is node 0 and every left subtree precedes its right sibling.
    nodes: Vec<Node>,
    feature_width: usize,
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [TransitionClass],
    categorical: Vec<bool>,
    params: &'a TreeParams,
    max_features: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    scratch: Vec<(f64, u8)>,
}

struct Candidate {
    feature: usize,
    rule: SplitRule,
    impurity: f64,
}

fn tally(y: &[TransitionClass], idx: &[usize]) -> [u32; NUM_CLASSES] {
    let mut c = [0u32; NUM_CLASSES];
    for &i in idx {
        c[y[i] as usize] += 1;
    }
    c
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let counts = tally(self.y, idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });

        let n = idx.len() as u32;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < 2 * self.params.min_leaf.max(1) {
            return id;
        }

        let parent = weighted_gini(&counts, n);
        let Some(best) = self.best_split(idx, &counts, parent) else {
            return id;
        };

        let (feature, rule) = (best.feature, best.rule);
        let mut lo = 0;
        for k in 0..idx.len() {
            if rule.goes_left(self.x.get(idx[k], feature)) {
                idx.swap(lo, k);
                lo += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(lo);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            rule,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, idx: &[usize], counts: &[u32; NUM_CLASSES], parent: f64) -> Option<Candidate> {
        let cols = self.x.cols();
        // a split must cut parent impurity by more than rounding noise
        let min_gain = 1e-12 * (idx.len() as f64).max(1.0);
        let mut order: Vec<usize> = (0..cols).collect();
        if self.max_features < cols {
            order.shuffle(self.rng);
        }
        for group in order.chunks(self.max_features.max(1)) {
            let mut group = group.to_vec();
            group.sort_unstable();
            let mut best: Option<Candidate> = None;
            for &f in &group {
                if let Some(c) = self.best_on_feature(idx, counts, f) {
                    if parent - c.impurity > min_gain && best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                        best = Some(c);
                    }
                }
            }
            if best.is_some() {
                return best;
            }
        }
        None
    }

    fn best_on_feature(&mut self, idx: &[usize], counts: &[u32; NUM_CLASSES], f: usize) -> Option<Candidate> {
        let min_leaf = self.params.min_leaf.max(1);
        self.scratch.clear();
        self.scratch
            .extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i] as u8)));
        self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = idx.len();
        let mut left = [0u32; NUM_CLASSES];
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n - 1 {
            left[self.scratch[k].1 as usize] += 1;
            if self.scratch[k].0 == self.scratch[k + 1].0 {
                continue;
            }
            let nl = k + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let mut right = *counts;
            for c in 0..NUM_CLASSES {
                right[c] -= left[c];
            }
            let imp = weighted_gini(&left, nl as u32) + weighted_gini(&right, (n - nl) as u32);
            if best.is_none_or(|(b, _)| imp < b) {
                best = Some((imp, k));
            }
        }
        let (impurity, k) = best?;
        let (lo, hi) = (self.scratch[k].0, self.scratch[k + 1].0);
        let rule = if self.categorical[f] {
            SplitRule::Equals(lo)
        } else {
            let mid = lo + (hi - lo) / 2.0;
            // midpoint can round up to `hi` for adjacent floats
            SplitRule::Threshold(if mid < hi { mid } else { lo })
        };
        Some(Candidate {
            feature: f,
            rule,
            impurity,
        })
    }
}

/// Columns whose values are all exactly `-1` or `+1`.
pub(crate) fn categorical_columns(x: &Matrix) -> Vec<bool> {
    (0..x.cols())
        .map(|j| (0..x.rows()).all(|i| matches!(x.get(i, j), v if v == 1.0 || v == -1.0)))
        .collect()
}

impl DecisionTree {
    pub fn fit<R: Rng>(x: &Matrix, y: &[TransitionClass], params: &TreeParams, rng: &mut R) -> Result<Self> {
        let mut idx: Vec<usize> = (0..x.rows()).collect();
        Self::fit_indices(x, y, &mut idx, &categorical_columns(x), params, rng)
    }

    /// Fits on the (possibly repeated) rows listed in `idx`.
    pub(crate) fn fit_indices<R: Rng>(
        x: &Matrix,
        y: &[TransitionClass],
        idx: &mut [usize],
        categorical: &[bool],
        params: &TreeParams,
        rng: &mut R,
    ) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims(
                format!("{} labels", x.rows()),
                format!("{} labels", y.len()),
            ));
        }
        if idx.is_empty() {
            return Err(Error::invalid("cannot grow a tree on an empty dataset"));
        }
        let mut b = Builder {
            x,
            y,
            categorical: categorical.to_vec(),
            params,
            max_features: params.max_features.resolve(x.cols()),
            rng,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(idx.len()),
        };
        b.grow(idx, 0);
        Ok(DecisionTree {
            nodes: b.nodes,
            feature_width: x.cols(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Class counts of the leaf reached by `x`.
    pub fn leaf_counts(&self, x: &[f64]) -> &[u32; NUM_CLASSES] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => id = if rule.goes_left(x[*feature]) { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> TransitionClass {
        argmax_class(self.leaf_counts(x))
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.u32(self.feature_width as u32);
        w.u32(self.nodes.len() as u32);
        self.write_node(w, 0);
    }

    fn write_node(&self, w: &mut ByteWriter, id: usize) {
        match &self.nodes[id] {
            Node::Leaf { counts } => {
                w.u8(0);
                counts.iter().for_each(|&c| w.u32(c));
            }
            Node::Split {
                feature,
                rule,
                left,
                right,
            } => {
                let (tag, v) = match rule {
                    SplitRule::Threshold(t) => (1, *t),
                    SplitRule::Equals(e) => (2, *e),
                };
                w.u8(tag);
                w.u32(*feature as u32);
                w.f64(v);
                self.write_node(w, *left);
                self.write_node(w, *right);
            }
        }
    }

    pub(crate) fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        let feature_width = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut nodes = Vec::with_capacity(count.min(1 << 20));
        read_node(r, &mut nodes, feature_width, count)?;
        if nodes.len() != count {
            return Err(Error::ModelFormat(format!(
                "tree declares {count} nodes, payload has {}",
                nodes.len()
            )));
        }
        Ok(DecisionTree { nodes, feature_width })
    }
}

fn read_node(r: &mut ByteReader<'_>, nodes: &mut Vec<Node>, width: usize, limit: usize) -> Result<usize> {
    if nodes.len() >= limit {
        return Err(Error::ModelFormat("tree has more nodes than declared".into()));
    }
    let id = nodes.len();
    match r.u8()? {
        0 => {
            let mut counts = [0u32; NUM_CLASSES];
            for c in &mut counts {
                *c = r.u32()?;
            }
            nodes.push(Node::Leaf { counts });
        }
        tag @ (1 | 2) => {
            let feature = r.u32()? as usize;
            if feature >= width {
                return Err(Error::ModelFormat(format!("split feature {feature} out of range")));
            }
            let v = r.f64()?;
            let rule = if tag == 1 {
                SplitRule::Threshold(v)
            } else {
                SplitRule::Equals(v)
            };
            nodes.push(Node::Leaf {
                counts: [0; NUM_CLASSES],
            });
            let left = read_node(r, nodes, width, limit)?;
            let right = read_node(r, nodes, width, limit)?;
            nodes[id] = Node::Split {
                feature,
                rule,
                left,
                right,
            };
        }
        other => return Err(Error::ModelFormat(format!("unknown tree node tag {other}"))),
    }
    Ok(id)
}

/// Most frequent class; ties go to the lowest class code.
pub(crate) fn argmax_class(counts: &[u32; NUM_CLASSES]) -> TransitionClass {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    TransitionClass::ALL[best]
}
