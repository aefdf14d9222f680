//! Isolation forest: random axis-aligned partitions; anomalies isolate in
//! fewer splits.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum INode {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ITree {
    nodes: Vec<INode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<ITree>,
    subsample_size: usize,
    height_limit: usize,
    seed: u64,
}

/// Average unsuccessful-search path length of a binary search tree on `n`
/// points, `2 H(n-1) - 2 (n-1) / n`, with exact harmonic numbers.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let harmonic: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
    2.0 * harmonic - 2.0 * (n - 1) as f64 / n as f64
}

/// Fits `n_trees` isolation trees, each on a subsample drawn without
/// replacement. `subsample_size` larger than the data is clamped.
pub fn fit_isolation_forest(
    values: &[Vec<f64>],
    n_trees: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<IsolationForest> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput("isolation forest needs at least 2 samples".into()));
    }
    if n_trees == 0 || subsample_size < 2 {
        return Err(Error::InvalidConfig("need n_trees >= 1 and subsample_size >= 2".into()));
    }
    let dim = values[0].len();
    if dim == 0 || values.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidInput("samples must share a non-zero dimension".into()));
    }
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("isolation forest needs finite values".into()));
    }
    let psi = subsample_size.min(n);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng_for(seed, t as u64);
            let rows: Vec<usize> = if psi == n {
                (0..n).collect()
            } else {
                let mut r = sample(&mut rng, n, psi).into_vec();
                r.sort_unstable();
                r
            };
            let mut tree = ITree { nodes: Vec::new() };
            grow(&mut tree, values, rows, 0, height_limit, &mut rng);
            tree
        })
        .collect();
    Ok(IsolationForest {
        trees,
        subsample_size: psi,
        height_limit,
        seed,
    })
}

fn grow<R: Rng + ?Sized>(
    tree: &mut ITree,
    values: &[Vec<f64>],
    rows: Vec<usize>,
    depth: usize,
    limit: usize,
    rng: &mut R,
) -> usize {
    let id = tree.nodes.len();
    tree.nodes.push(INode::Leaf { size: rows.len() });
    if depth >= limit || rows.len() <= 1 {
        return id;
    }
    let dim = values[rows[0]].len();
    let spans: Vec<(usize, f64, f64)> = (0..dim)
        .filter_map(|f| {
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(values[r][f]), hi.max(values[r][f]))
                });
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if spans.is_empty() {
        return id;
    }
    let (feature, lo, hi) = spans[rng.random_range(0..spans.len())];
    let value = loop {
        let v = lo + (hi - lo) * rng.random::<f64>();
        if v > lo && v <= hi {
            break v;
        }
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| values[r][feature] < value);
    let left = grow(tree, values, left_rows, depth + 1, limit, rng);
    let right = grow(tree, values, right_rows, depth + 1, limit, rng);
    tree.nodes[id] = INode::Split {
        feature,
        value,
        left,
        right,
    };
    id
}

impl ITree {
    fn path_length(&self, v: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match &self.nodes[node] {
                INode::Leaf { size } => return depth as f64 + average_path_length(*size),
                INode::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if v[*feature] < *value { *left } else { *right };
                    depth += 1;
                }
            }
        }
    }

    fn height(&self) -> usize {
        fn walk(nodes: &[INode], id: usize) -> usize {
            match &nodes[id] {
                INode::Leaf { .. } => 0,
                INode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl IsolationForest {
    /// `2^(-E[h(v)] / c(psi))`, in (0, 1]; higher is more anomalous.
    pub fn anomaly_score(&self, v: &[f64]) -> f64 {
        let mean_path =
            self.trees.iter().map(|t| t.path_length(v)).sum::<f64>() / self.trees.len() as f64;
        let c = average_path_length(self.subsample_size);
        if c == 0.0 {
            return 1.0;
        }
        2f64.powf(-mean_path / c)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn max_tree_height(&self) -> usize {
        self.trees.iter().map(ITree::height).max().unwrap_or(0)
    }
}
