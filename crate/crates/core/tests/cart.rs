use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbanca::dataset::TransitionClass;
use urbanca::knowledge::{gini, DecisionTree, Node, SplitRule, TreeParams};
use urbanca::matrix::Matrix;

/// 1000 rows, 4 classes given by the signs of features 0 and 1 (with a gap
/// around zero), plus two uninformative noise columns and one ±1 column.
fn axis_separable(seed: u64) -> (Matrix, Vec<TransitionClass>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..1000 {
        let a: f64 = rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let b: f64 = rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let flag = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        rows.push(vec![a, b, rng.gen_range(-1.0..1.0), flag, rng.gen_range(-1.0..1.0)]);
        labels.push(TransitionClass::ALL[usize::from(a > 0.0) * 2 + usize::from(b > 0.0)]);
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

fn goes_left(rule: SplitRule, v: f64) -> bool {
    match rule {
        SplitRule::Threshold(t) => v <= t,
        SplitRule::Equals(e) => v == e,
    }
}

fn counts(rows: &[usize], y: &[TransitionClass]) -> [usize; 4] {
    let mut c = [0; 4];
    for &r in rows {
        c[y[r].code() as usize] += 1;
    }
    c
}

/// Routes the training rows down the tree and checks every split.
fn check_node(tree: &DecisionTree, node: usize, rows: &[usize], x: &Matrix, y: &[TransitionClass], splits: &mut usize) {
    match &tree.nodes()[node] {
        Node::Leaf { counts: stored } => {
            let c = counts(rows, y);
            assert_eq!(stored.map(|v| v as usize), c, "leaf {node} holds the rows routed to it");
        }
        Node::Split {
            feature,
            rule,
            left,
            right,
        } => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| goes_left(*rule, x.get(i, *feature)));
            assert!(!l.is_empty() && !r.is_empty(), "split {node} separates rows");
            let n = rows.len() as f64;
            let parent = gini(&counts(rows, y)).unwrap();
            let children =
                l.len() as f64 / n * gini(&counts(&l, y)).unwrap() + r.len() as f64 / n * gini(&counts(&r, y)).unwrap();
            assert!(children < parent, "split {node}: weighted gini {children} !< {parent}");
            *splits += 1;
            check_node(tree, *left, &l, x, y, splits);
            check_node(tree, *right, &r, x, y, splits);
        }
    }
}

#[test]
fn unlimited_tree_fits_separable_data_exactly() {
    let (x, y) = axis_separable(17);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tree = DecisionTree::fit(&x, &y, &TreeParams::default(), &mut rng).unwrap();
    for (i, row) in x.iter_rows().enumerate() {
        assert_eq!(tree.predict_row(row), y[i], "row {i}");
    }
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut splits = 0;
    check_node(&tree, 0, &rows, &x, &y, &mut splits);
    assert!(splits >= 3, "four classes need at least three splits");
}

#[test]
fn noisy_labels_still_reduce_gini_at_every_split() {
    let (x, mut y) = axis_separable(23);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for label in y.iter_mut() {
        if rng.gen_bool(0.1) {
            *label = TransitionClass::ALL[rng.gen_range(0..4)];
        }
    }
    let tree = DecisionTree::fit(&x, &y, &TreeParams::default(), &mut rng).unwrap();
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut splits = 0;
    check_node(&tree, 0, &rows, &x, &y, &mut splits);
    assert!(splits > 3);
}
