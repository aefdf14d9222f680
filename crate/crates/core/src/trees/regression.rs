use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, Matrix};
use crate::error::{Error, Result};

/// Routing rule of an internal node: rows satisfying the rule go left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `x <= threshold`
    Threshold(f64),
    /// `x == category`
    Category(u32),
}

impl SplitRule {
    fn goes_left(&self, x: f64) -> bool {
        match *self {
            SplitRule::Threshold(t) => x <= t,
            SplitRule::Category(c) => x == c as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Number of features drawn at each node; `None` uses every feature.
    pub mtry: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 3,
            min_leaf: 2,
            mtry: None,
        }
    }
}

/// Training data for one tree. `targets` is row-major with `n_outputs`
/// values per row. `sizes` is the per-row sample multiplicity used by the
/// `min_leaf` constraint (one per row when absent).
#[derive(Clone, Copy, Debug)]
pub struct TreeData<'a> {
    pub x: &'a Matrix,
    pub targets: &'a [f64],
    pub n_outputs: usize,
    pub weights: Option<&'a [f64]>,
    pub sizes: Option<&'a [f64]>,
}

impl<'a> TreeData<'a> {
    pub fn single(x: &'a Matrix, targets: &'a [f64]) -> Self {
        TreeData {
            x,
            targets,
            n_outputs: 1,
            weights: None,
            sizes: None,
        }
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn size(&self, i: usize) -> f64 {
        self.sizes.map_or(1.0, |s| s[i])
    }

    fn target(&self, i: usize, o: usize) -> f64 {
        self.targets[i * self.n_outputs + o]
    }
}

/// Greedy variance-reduction tree with (weighted) mean leaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_outputs: usize,
    max_depth: usize,
}

/// Fits a single-output tree on every feature. Deterministic.
pub fn fit_regression_tree(
    x: &Matrix,
    targets: &[f64],
    weights: Option<&[f64]>,
    max_depth: usize,
    min_leaf: usize,
) -> Result<RegressionTree> {
    let data = TreeData {
        weights,
        ..TreeData::single(x, targets)
    };
    let config = TreeConfig {
        max_depth,
        min_leaf,
        mtry: None,
    };
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    RegressionTree::fit_rows(&data, rows, &config, &mut NoRng)
}

/// Placeholder rng for deterministic fits without feature subsampling.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        0
    }
    fn next_u64(&mut self) -> u64 {
        0
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        dst.fill(0);
    }
}

struct Totals {
    weight: f64,
    size: f64,
    sums: Vec<f64>,
    sq: f64,
}

struct Candidate {
    gain: f64,
    feature: usize,
    rule: SplitRule,
}

impl RegressionTree {
    pub fn fit<R: Rng + ?Sized>(data: &TreeData, config: &TreeConfig, rng: &mut R) -> Result<Self> {
        let rows: Vec<usize> = (0..data.x.n_rows()).collect();
        Self::fit_rows(data, rows, config, rng)
    }

    /// Fits on an explicit row list, which may contain repeats (bootstrap).
    pub fn fit_rows<R: Rng + ?Sized>(
        data: &TreeData,
        rows: Vec<usize>,
        config: &TreeConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let n = data.x.n_rows();
        if n == 0 || rows.is_empty() {
            return Err(Error::InvalidInput("cannot fit a tree on empty input".into()));
        }
        if config.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be at least 1".into()));
        }
        if data.n_outputs == 0 || data.targets.len() != n * data.n_outputs {
            return Err(Error::InvalidInput("targets do not match the feature matrix".into()));
        }
        if data.weights.is_some_and(|w| w.len() != n) || data.sizes.is_some_and(|s| s.len() != n) {
            return Err(Error::InvalidInput("weights do not match the feature matrix".into()));
        }
        let mut tree = RegressionTree {
            nodes: Vec::new(),
            n_outputs: data.n_outputs,
            max_depth: config.max_depth,
        };
        tree.grow(data, rows, 0, config, rng);
        Ok(tree)
    }

    fn grow<R: Rng + ?Sized>(
        &mut self,
        data: &TreeData,
        rows: Vec<usize>,
        depth: usize,
        config: &TreeConfig,
        rng: &mut R,
    ) -> usize {
        let totals = totals(data, &rows);
        let id = self.nodes.len();
        let leaf_value: Vec<f64> = totals
            .sums
            .iter()
            .map(|s| if totals.weight > 0.0 { s / totals.weight } else { 0.0 })
            .collect();
        self.nodes.push(Node::Leaf {
            value: leaf_value,
        });

        let min_leaf = config.min_leaf.max(1) as f64;
        if depth >= config.max_depth || totals.size < 2.0 * min_leaf || totals.weight <= 0.0 {
            return id;
        }
        let impurity = totals.sq - totals.sums.iter().map(|s| s * s).sum::<f64>() / totals.weight;
        let scale = totals.sq.abs().max(f64::MIN_POSITIVE);
        if impurity <= 1e-12 * scale {
            return id;
        }

        let features = candidate_features(data.x.n_cols(), config.mtry, rng);
        let mut best: Option<Candidate> = None;
        for &f in &features {
            let found = match data.x.kind(f) {
                FeatureKind::Continuous => best_threshold(data, &rows, f, &totals, min_leaf),
                FeatureKind::Categorical => best_category(data, &rows, f, &totals, min_leaf),
            };
            if let Some(c) = found {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else { return id };
        if best.gain <= 1e-12 * scale {
            return id;
        }

        let column = data.x.column(best.feature);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| best.rule.goes_left(column[i]));
        let left = self.grow(data, left_rows, depth + 1, config, rng);
        let right = self.grow(data, right_rows, depth + 1, config, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            rule: best.rule,
            left,
            right,
        };
        id
    }

    fn leaf_for(&self, value_of: impl Fn(usize) -> f64) -> &[f64] {
        match &self.nodes[self.node_for(value_of)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("node_for stops at leaves"),
        }
    }

    fn node_for(&self, value_of: impl Fn(usize) -> f64) -> usize {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Leaf { .. } => return node,
                Node::Split {
                    feature,
                    rule,
                    left,
                    right,
                } => {
                    node = if rule.goes_left(value_of(*feature)) { *left } else { *right };
                }
            }
        }
    }

    /// Identifier of the leaf a row lands in (stable for a given tree).
    pub fn leaf_id(&self, row: &[f64]) -> usize {
        self.node_for(|f| row[f])
    }

    /// First output for a row given as a dense slice.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.leaf_for(|f| row[f])[0]
    }

    pub fn predict_outputs(&self, row: &[f64]) -> &[f64] {
        self.leaf_for(|f| row[f])
    }

    pub fn predict_matrix_row(&self, x: &Matrix, row: usize) -> &[f64] {
        self.leaf_for(|f| x.get(row, f))
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Length of the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Distinct split points used on `feature`, ascending.
    pub fn thresholds(&self, feature: usize) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split {
                    feature: f,
                    rule: SplitRule::Threshold(t),
                    ..
                } if *f == feature => Some(*t),
                _ => None,
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

fn totals(data: &TreeData, rows: &[usize]) -> Totals {
    let mut t = Totals {
        weight: 0.0,
        size: 0.0,
        sums: vec![0.0; data.n_outputs],
        sq: 0.0,
    };
    for &i in rows {
        let w = data.weight(i);
        t.weight += w;
        t.size += data.size(i);
        for o in 0..data.n_outputs {
            let y = data.target(i, o);
            t.sums[o] += w * y;
            t.sq += w * y * y;
        }
    }
    t
}

fn candidate_features<R: Rng + ?Sized>(p: usize, mtry: Option<usize>, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..p).collect();
    match mtry {
        Some(m) if m < p => {
            for i in 0..m {
                let j = rng.random_range(i..p);
                all.swap(i, j);
            }
            all.truncate(m);
            all.sort_unstable();
            all
        }
        _ => all,
    }
}

fn score(sums: &[f64], weight: f64) -> f64 {
    sums.iter().map(|s| s * s).sum::<f64>() / weight
}

fn best_threshold(
    data: &TreeData,
    rows: &[usize],
    feature: usize,
    totals: &Totals,
    min_leaf: f64,
) -> Option<Candidate> {
    let column = data.x.column(feature);
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    let parent = score(&totals.sums, totals.weight);

    let k = data.n_outputs;
    let mut left_sums = vec![0.0; k];
    let mut right_sums = vec![0.0; k];
    let mut left_w = 0.0;
    let mut left_size = 0.0;
    let mut best: Option<Candidate> = None;
    for pos in 0..order.len() - 1 {
        let i = order[pos];
        let w = data.weight(i);
        left_w += w;
        left_size += data.size(i);
        for (o, s) in left_sums.iter_mut().enumerate() {
            *s += w * data.target(i, o);
        }
        let (lo, hi) = (column[i], column[order[pos + 1]]);
        if lo.is_nan() || hi.is_nan() || lo == hi {
            continue;
        }
        let right_w = totals.weight - left_w;
        let right_size = totals.size - left_size;
        if left_size < min_leaf || right_size < min_leaf || left_w <= 0.0 || right_w <= 0.0 {
            continue;
        }
        for o in 0..k {
            right_sums[o] = totals.sums[o] - left_sums[o];
        }
        let gain = score(&left_sums, left_w) + score(&right_sums, right_w) - parent;
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            let mut t = 0.5 * (lo + hi);
            if t >= hi || t < lo {
                t = lo;
            }
            best = Some(Candidate {
                gain,
                feature,
                rule: SplitRule::Threshold(t),
            });
        }
    }
    best
}

fn best_category(
    data: &TreeData,
    rows: &[usize],
    feature: usize,
    totals: &Totals,
    min_leaf: f64,
) -> Option<Candidate> {
    let column = data.x.column(feature);
    let k = data.n_outputs;
    // code -> (weight, size, sums)
    let mut groups: std::collections::BTreeMap<u32, (f64, f64, Vec<f64>)> = Default::default();
    for &i in rows {
        let v = column[i];
        if v.is_nan() {
            continue;
        }
        let g = groups.entry(v as u32).or_insert_with(|| (0.0, 0.0, vec![0.0; k]));
        let w = data.weight(i);
        g.0 += w;
        g.1 += data.size(i);
        for o in 0..k {
            g.2[o] += w * data.target(i, o);
        }
    }
    if groups.len() < 2 {
        return None;
    }
    let mut ordered: Vec<(u32, &(f64, f64, Vec<f64>))> = groups.iter().map(|(c, g)| (*c, g)).collect();
    ordered.sort_by(|a, b| {
        let ma = if a.1 .0 > 0.0 { a.1 .2[0] / a.1 .0 } else { 0.0 };
        let mb = if b.1 .0 > 0.0 { b.1 .2[0] / b.1 .0 } else { 0.0 };
        ma.total_cmp(&mb).then(a.0.cmp(&b.0))
    });
    let parent = score(&totals.sums, totals.weight);
    let mut best: Option<Candidate> = None;
    let mut rest = vec![0.0; k];
    for (code, (w, size, sums)) in ordered {
        let right_w = totals.weight - w;
        let right_size = totals.size - size;
        if *size < min_leaf || right_size < min_leaf || *w <= 0.0 || right_w <= 0.0 {
            continue;
        }
        for o in 0..k {
            rest[o] = totals.sums[o] - sums[o];
        }
        let gain = score(sums, *w) + score(&rest, right_w) - parent;
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Candidate {
                gain,
                feature,
                rule: SplitRule::Category(code),
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_feature(x: &[f64]) -> Matrix {
        Matrix::from_columns(vec![x.to_vec()]).unwrap()
    }

    /// Brute force: try every midpoint and return the one with the smallest
    /// squared error.
    fn brute_force_stump(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let mut xs: Vec<f64> = x.to_vec();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
        for w in xs.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let l: Vec<f64> = x.iter().zip(y).filter(|(xi, _)| **xi <= t).map(|(_, y)| *y).collect();
            let r: Vec<f64> = x.iter().zip(y).filter(|(xi, _)| **xi > t).map(|(_, y)| *y).collect();
            let ml = l.iter().sum::<f64>() / l.len() as f64;
            let mr = r.iter().sum::<f64>() / r.len() as f64;
            let sse: f64 = l.iter().map(|v| (v - ml).powi(2)).sum::<f64>()
                + r.iter().map(|v| (v - mr).powi(2)).sum::<f64>();
            if sse < best.0 {
                best = (sse, t, ml, mr);
            }
        }
        (best.1, best.2, best.3)
    }

    #[test]
    fn stump_matches_enumeration() {
        let x = [1.0, 2.0, 9.0, 10.0];
        let y = [0.0, 0.0, 1.0, 1.0];
        let (t, l, r) = brute_force_stump(&x, &y);
        assert!(t > 2.0 && t < 9.0);
        let tree = fit_regression_tree(&one_feature(&x), &y, None, 1, 1).unwrap();
        assert_eq!(tree.thresholds(0), vec![t]);
        assert_eq!(tree.predict(&[1.5]), l);
        assert_eq!(tree.predict(&[9.5]), r);
        assert_eq!((l, r), (0.0, 1.0));
    }

    #[test]
    fn constant_target_single_leaf() {
        let x = one_feature(&[1.0, 2.0, 3.0, 4.0]);
        let tree = fit_regression_tree(&x, &[2.5; 4], None, 3, 1).unwrap();
        assert_eq!(tree.n_leaves(), 1);
        assert_eq!(tree.predict(&[10.0]), 2.5);
    }

    #[test]
    fn depth_zero_rejected() {
        let x = one_feature(&[1.0, 2.0]);
        assert!(fit_regression_tree(&x, &[0.0, 1.0], None, 0, 1).is_err());
    }

    #[test]
    fn empty_input_rejected() {
        let x = Matrix::from_columns(vec![vec![]]).unwrap();
        assert!(fit_regression_tree(&x, &[], None, 2, 1).is_err());
    }

    #[test]
    fn weighted_leaf_mean() {
        let x = one_feature(&[1.0, 1.0, 5.0]);
        let tree = fit_regression_tree(&x, &[0.0, 3.0, 7.0], Some(&[2.0, 1.0, 1.0]), 1, 1).unwrap();
        assert!((tree.predict(&[1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // both features separate the targets identically
        let x = Matrix::from_columns(vec![vec![0.0, 0.0, 1.0, 1.0], vec![0.0, 0.0, 1.0, 1.0]]).unwrap();
        let tree = fit_regression_tree(&x, &[0.0, 0.0, 1.0, 1.0], None, 1, 1).unwrap();
        assert_eq!(tree.thresholds(0), vec![0.5]);
        assert!(tree.thresholds(1).is_empty());
    }

    #[test]
    fn categorical_one_vs_rest() {
        let x = Matrix::with_kinds(
            vec![vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0]],
            vec![FeatureKind::Categorical],
        )
        .unwrap();
        let y = [0.0, 0.0, 5.0, 0.0, 0.0, 5.0];
        let tree = fit_regression_tree(&x, &y, None, 1, 1).unwrap();
        assert_eq!(tree.predict(&[2.0]), 5.0);
        assert_eq!(tree.predict(&[0.0]), 0.0);
    }

    fn sse(tree: &RegressionTree, x: &Matrix, y: &[f64]) -> f64 {
        (0..y.len()).map(|i| (tree.predict_matrix_row(x, i)[0] - y[i]).powi(2)).sum()
    }

    proptest! {
        #[test]
        fn training_error_non_increasing_in_depth(
            data in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -5.0f64..5.0), 5..60)
        ) {
            let x = Matrix::from_columns(vec![
                data.iter().map(|d| d.0).collect(),
                data.iter().map(|d| d.1).collect(),
            ]).unwrap();
            let y: Vec<f64> = data.iter().map(|d| d.2).collect();
            let mut prev = f64::INFINITY;
            for depth in 1..=5 {
                let tree = fit_regression_tree(&x, &y, None, depth, 1).unwrap();
                prop_assert!(tree.depth() <= depth);
                let e = sse(&tree, &x, &y);
                prop_assert!(e <= prev + 1e-9);
                prev = e;
            }
        }
    }
}
