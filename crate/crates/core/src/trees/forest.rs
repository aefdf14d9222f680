use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Matrix, RegressionTree, TreeConfig, TreeData};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Every tree sees every row once.
    All,
    /// Rows drawn with replacement; `fraction` of n per tree.
    Bootstrap { fraction: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per node; `None` means all.
    pub mtry: Option<usize>,
    pub sampling: Sampling,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            mtry: None,
            sampling: Sampling::Bootstrap { fraction: 1.0 },
            max_depth: 64,
            min_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ForestTarget<'a> {
    Regression(&'a [f64]),
    Classification { labels: &'a [u32], n_classes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    /// Zero for regression.
    n_classes: usize,
}

pub fn fit_random_forest(x: &Matrix, target: ForestTarget, config: &ForestConfig) -> Result<RandomForest> {
    let n = x.n_rows();
    let p = x.n_cols();
    if p == 0 {
        return Err(Error::InvalidInput("random forest needs at least one feature column".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("random forest needs at least one row".into()));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
    }
    if config.mtry.is_some_and(|m| m == 0 || m > p) {
        return Err(Error::InvalidConfig(format!("mtry must lie in 1..={p}")));
    }
    let (targets, n_outputs, n_classes) = match target {
        ForestTarget::Regression(y) => {
            if y.len() != n {
                return Err(Error::InvalidInput("target length mismatch".into()));
            }
            (y.to_vec(), 1, 0)
        }
        ForestTarget::Classification { labels, n_classes } => {
            if labels.len() != n || n_classes == 0 || labels.iter().any(|&l| l as usize >= n_classes) {
                return Err(Error::InvalidInput("class labels out of range".into()));
            }
            let mut onehot = vec![0.0; n * n_classes];
            for (i, &l) in labels.iter().enumerate() {
                onehot[i * n_classes + l as usize] = 1.0;
            }
            (onehot, n_classes, n_classes)
        }
    };
    let data = TreeData {
        x,
        targets: &targets,
        n_outputs,
        weights: None,
        sizes: None,
    };
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        mtry: config.mtry,
    };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng_for(config.seed, t as u64);
            let rows = match config.sampling {
                Sampling::All => (0..n).collect(),
                Sampling::Bootstrap { fraction } => {
                    let m = ((fraction * n as f64).round() as usize).max(1);
                    (0..m).map(|_| rng.random_range(0..n)).collect()
                }
            };
            RegressionTree::fit_rows(&data, rows, &tree_config, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest { trees, n_classes })
}

/// Mean of tree predictions for regression, majority vote (lowest class on
/// ties) for classification.
pub fn predict_forest(forest: &RandomForest, row: &[f64]) -> f64 {
    if forest.n_classes == 0 {
        forest.trees.iter().map(|t| t.predict(row)).sum::<f64>() / forest.trees.len() as f64
    } else {
        forest.vote(row) as f64
    }
}

impl RandomForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn is_classifier(&self) -> bool {
        self.n_classes > 0
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        predict_forest(self, row)
    }

    pub fn vote(&self, row: &[f64]) -> u32 {
        let k = self.n_classes.max(1);
        let mut votes = vec![0usize; k];
        for t in &self.trees {
            let dist = t.predict_outputs(row);
            votes[argmax(dist)] += 1;
        }
        argmax_counts(&votes) as u32
    }

    /// Class probabilities averaged over the trees' leaf distributions.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let k = self.n_classes.max(1);
        let mut acc = vec![0.0; k];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.predict_outputs(row)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.trees.len() as f64).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn argmax_counts(v: &[usize]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
