use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bins::{build_bins, count_bins, BinLayout, ValueBins};
use super::model::{sigmoid, GamModel, Link, ShapeFunction};
use super::{GamConfig, LinkChoice};
use crate::error::{Error, Result};
use crate::seed;
use crate::table::{Column, Table};
use crate::trees::{FeatureKind, Matrix, RegressionTree, TreeConfig, TreeData};

const PROB_CLIP: f64 = 1e-6;
/// Hessian mass added to every log-loss leaf; with no damping a leaf of
/// confidently classified rows can take an arbitrarily large step.
const NEWTON_DAMPING: f64 = 1.0;

/// Per-round losses of one bag, measured after each full cycle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BagTrace {
    /// Weighted loss on the bag's training rows; entry 0 is before boosting.
    pub train_loss: Vec<f64>,
    /// Loss on the held-out rows; empty without early stopping.
    pub holdout_loss: Vec<f64>,
    /// Number of rounds kept in the final model.
    pub best_round: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub bags: Vec<BagTrace>,
}

pub fn fit_gam(table: &Table, target: &str, config: &GamConfig) -> Result<GamModel> {
    fit_gam_with_trace(table, target, config).map(|(m, _)| m)
}

/// Binned training problem shared by every bag.
struct Problem {
    link: Link,
    y: Vec<f64>,
    layouts: Vec<BinLayout>,
    /// `bins[j][i]`: bin of row `i` for feature `j`.
    bins: Vec<Vec<u32>>,
    /// Tree input for each bin of each feature.
    keys: Vec<Vec<f64>>,
    kinds: Vec<FeatureKind>,
}

pub fn fit_gam_with_trace(table: &Table, target: &str, config: &GamConfig) -> Result<(GamModel, FitTrace)> {
    config.validate()?;
    let y_col = table.column(target)?;
    let y: Vec<f64> = y_col.values().to_vec();
    if y.iter().any(|v| !v.is_finite()) || (0..y_col.len()).any(|i| y_col.is_missing_coded(i)) {
        return Err(Error::column(target, "target must be finite and fully observed"));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("cannot fit on an empty table".into()));
    }
    let binary = y.iter().all(|&v| v == 0.0 || v == 1.0);
    let link = match config.link {
        LinkChoice::Identity => Link::Identity,
        LinkChoice::Logistic => {
            if !binary {
                return Err(Error::column(target, "logistic link needs a 0/1 target"));
            }
            Link::Logistic
        }
        LinkChoice::Auto if binary => Link::Logistic,
        LinkChoice::Auto => Link::Identity,
    };
    if link == Link::Logistic && (y.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 1.0)) {
        return Err(Error::column(target, "binary target has a single class"));
    }

    let features: Vec<String> = match &config.features {
        Some(f) => f.clone(),
        None => table
            .column_names()
            .into_iter()
            .filter(|n| n != target)
            .collect(),
    };
    if features.is_empty() {
        return Err(Error::InvalidInput("no features to model".into()));
    }
    if features.iter().any(|f| f == target) {
        return Err(Error::InvalidInput(format!("target `{target}` listed as a feature")));
    }

    let mut layouts = Vec::with_capacity(features.len());
    let mut bins = Vec::with_capacity(features.len());
    for name in &features {
        let col = table.column(name)?;
        let mut layout = match config.layouts.get(name) {
            Some(l) => l.clone(),
            None => build_bins(col, config.max_bins)?,
        };
        layout.counts = count_bins(&layout, col.values());
        bins.push(assign_bins(&layout, col)?);
        layouts.push(layout);
    }
    let keys: Vec<Vec<f64>> = layouts.iter().map(bin_keys).collect();
    let kinds = layouts
        .iter()
        .map(|l| match l.values {
            ValueBins::Continuous { .. } => FeatureKind::Continuous,
            ValueBins::Categorical { .. } => FeatureKind::Categorical,
        })
        .collect();
    let problem = Problem {
        link,
        y,
        layouts,
        bins,
        keys,
        kinds,
    };

    let results: Vec<(f64, Vec<Vec<f64>>, BagTrace)> = (0..config.bags)
        .into_par_iter()
        .map(|b| run_bag(&problem, config, seed::derive(config.seed, b as u64)))
        .collect::<Result<_>>()?;

    let n_bags = results.len() as f64;
    let mut intercept = results.iter().map(|r| r.0).sum::<f64>() / n_bags;
    let mut shapes = Vec::with_capacity(features.len());
    for (j, (name, layout)) in features.iter().zip(problem.layouts).enumerate() {
        let mut scores = vec![0.0; layout.n_bins()];
        for r in &results {
            for (s, v) in scores.iter_mut().zip(&r.1[j]) {
                *s += v;
            }
        }
        for s in &mut scores {
            *s /= n_bags;
        }
        let mut shape = ShapeFunction {
            feature: name.clone(),
            layout,
            scores,
            edit_cuts: Vec::new(),
        };
        let mean = shape.weighted_mean();
        for s in &mut shape.scores {
            *s -= mean;
        }
        intercept += mean;
        shapes.push(shape);
    }
    let mut stored = config.clone();
    stored.layouts.clear();
    let model = GamModel {
        intercept,
        link,
        target: target.to_string(),
        shapes,
        config: stored,
        n_train: table.n_rows(),
        history: Vec::new(),
    };
    let trace = FitTrace {
        bags: results.into_iter().map(|r| r.2).collect(),
    };
    Ok((model, trace))
}

fn assign_bins(layout: &BinLayout, col: &Column) -> Result<Vec<u32>> {
    col.values()
        .iter()
        .map(|&v| {
            layout
                .bin_of(v)
                .map(|b| b as u32)
                .ok_or_else(|| Error::column(col.name(), format!("value {v} has no bin in the layout")))
        })
        .collect()
}

/// Continuous value bins are keyed by index and the missing bin by -1, so a
/// single threshold can separate it; categorical bins are category keys.
fn bin_keys(layout: &BinLayout) -> Vec<f64> {
    let n_value = layout.n_value_bins();
    (0..layout.n_bins())
        .map(|b| match (&layout.values, b < n_value) {
            (ValueBins::Continuous { .. }, false) => -1.0,
            _ => b as f64,
        })
        .collect()
}

fn loss(link: Link, y: f64, f: f64) -> f64 {
    match link {
        Link::Identity => (y - f) * (y - f),
        Link::Logistic => {
            let p = sigmoid(f).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

fn mean_loss(link: Link, y: &[f64], f: &[f64], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..y.len() {
        if w[i] > 0.0 {
            num += w[i] * loss(link, y[i], f[i]);
            den += w[i];
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn holdout_rows<R: Rng>(problem: &Problem, fraction: f64, rng: &mut R) -> Vec<usize> {
    let n = problem.y.len();
    let groups: Vec<Vec<usize>> = match problem.link {
        Link::Logistic => [0.0, 1.0]
            .iter()
            .map(|c| (0..n).filter(|&i| problem.y[i] == *c).collect())
            .collect(),
        Link::Identity => vec![(0..n).collect()],
    };
    let mut out = Vec::new();
    for mut g in groups {
        g.shuffle(rng);
        let k = ((fraction * g.len() as f64).round() as usize).min(g.len().saturating_sub(1));
        out.extend_from_slice(&g[..k]);
    }
    out.sort_unstable();
    out
}

type BagResult = (f64, Vec<Vec<f64>>, BagTrace);

fn run_bag(problem: &Problem, config: &GamConfig, bag_seed: u64) -> Result<BagResult> {
    let mut rng = seed::rng(bag_seed);
    let n = problem.y.len();
    let link = problem.link;
    let y = &problem.y;

    let mut in_holdout = vec![false; n];
    if let Some(es) = config.early_stopping {
        for i in holdout_rows(problem, es.holdout_fraction, &mut rng) {
            in_holdout[i] = true;
        }
    }
    let train: Vec<usize> = (0..n).filter(|&i| !in_holdout[i]).collect();
    let mut w = vec![0.0; n];
    if config.bootstrap {
        for _ in 0..train.len() {
            w[train[rng.random_range(0..train.len())]] += 1.0;
        }
    } else {
        for &i in &train {
            w[i] = 1.0;
        }
    }
    let hw: Vec<f64> = in_holdout.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let has_holdout = hw.iter().any(|&v| v > 0.0);

    let wsum: f64 = w.iter().sum();
    let ybar = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let intercept = match link {
        Link::Identity => ybar,
        Link::Logistic => {
            let p = ybar.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            (p / (1.0 - p)).ln()
        }
    };

    let mut scores: Vec<Vec<f64>> = problem.layouts.iter().map(|l| vec![0.0; l.n_bins()]).collect();
    let mut f = vec![intercept; n];
    let mut trace = BagTrace {
        train_loss: vec![mean_loss(link, y, &f, &w)],
        ..Default::default()
    };
    let mut best_scores = scores.clone();
    let mut best_loss = if has_holdout {
        let l = mean_loss(link, y, &f, &hw);
        trace.holdout_loss.push(l);
        l
    } else {
        f64::INFINITY
    };
    let mut best_round = 0;
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        mtry: None,
    };

    for round in 1..=config.max_rounds {
        for j in 0..problem.layouts.len() {
            let n_bins = scores[j].len();
            let mut g = vec![0.0; n_bins];
            let mut h = vec![0.0; n_bins];
            let mut c = vec![0.0; n_bins];
            let bins = &problem.bins[j];
            for i in 0..n {
                if w[i] == 0.0 {
                    continue;
                }
                let b = bins[i] as usize;
                let (gi, hi) = match link {
                    Link::Identity => (y[i] - f[i], 1.0),
                    Link::Logistic => {
                        let p = sigmoid(f[i]).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                        (y[i] - p, p * (1.0 - p))
                    }
                };
                g[b] += w[i] * gi;
                h[b] += w[i] * hi;
                c[b] += w[i];
            }
            let delta = tree_step(&problem.keys[j], problem.kinds[j], &g, &h, &c, link, &tree_config)?;
            let Some(delta) = delta else { continue };
            for (s, d) in scores[j].iter_mut().zip(&delta) {
                *s += config.learning_rate * d;
            }
            for i in 0..n {
                f[i] += config.learning_rate * delta[bins[i] as usize];
            }
        }
        trace.train_loss.push(mean_loss(link, y, &f, &w));
        if has_holdout {
            let l = mean_loss(link, y, &f, &hw);
            trace.holdout_loss.push(l);
            if l < best_loss {
                best_loss = l;
                best_round = round;
                best_scores.clone_from(&scores);
            } else if round - best_round >= config.early_stopping.map_or(usize::MAX, |e| e.patience) {
                break;
            }
        } else {
            best_round = round;
        }
    }
    if !has_holdout {
        best_scores = scores;
    }
    trace.best_round = best_round;
    Ok((intercept, best_scores, trace))
}

/// Fits a shallow tree over the bins of one feature to the mean negative
/// gradient and returns the step for every bin. Squared error takes the
/// leaf means; log loss takes a damped Newton step per leaf,
/// `ΣG / (ΣH + NEWTON_DAMPING)`, which stays bounded where the hessians
/// vanish on nearly separated rows.
fn tree_step(
    keys: &[f64],
    kind: FeatureKind,
    g: &[f64],
    h: &[f64],
    c: &[f64],
    link: Link,
    config: &TreeConfig,
) -> Result<Option<Vec<f64>>> {
    let rows: Vec<usize> = (0..keys.len()).filter(|&b| c[b] > 0.0).collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let x = Matrix::with_kinds(vec![rows.iter().map(|&b| keys[b]).collect()], vec![kind])?;
    let targets: Vec<f64> = rows.iter().map(|&b| g[b] / c[b]).collect();
    let sizes: Vec<f64> = rows.iter().map(|&b| c[b]).collect();
    let data = TreeData {
        x: &x,
        targets: &targets,
        n_outputs: 1,
        weights: Some(&sizes),
        sizes: Some(&sizes),
    };
    // no feature subsampling, so the rng is never drawn from
    let tree = RegressionTree::fit(&data, config, &mut seed::rng(0))?;
    if link == Link::Identity {
        return Ok(Some(keys.iter().map(|&k| tree.predict(&[k])).collect()));
    }
    let leaf: Vec<usize> = keys.iter().map(|&k| tree.leaf_id(&[k])).collect();
    let mut sums: std::collections::HashMap<usize, (f64, f64)> = std::collections::HashMap::new();
    for b in 0..keys.len() {
        let e = sums.entry(leaf[b]).or_default();
        e.0 += g[b];
        e.1 += h[b];
    }
    Ok(Some(
        leaf.iter()
            .map(|l| {
                let (gs, hs) = sums[l];
                gs / (hs + NEWTON_DAMPING)
            })
            .collect(),
    ))
}
