//! Replicated benchmarks: how often the missing-bin test rejects under each
//! mechanism, and how well different classifiers predict missingness.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surrogate::{surrogate_table, SurrogateConfig};
use super::{gen_missing, MaskProtocol, Mechanism, ScoreModel, SynthSpec};
use crate::error::{Error, Result};
use crate::gam::{fit_gam, GamConfig, LinkChoice};
use crate::missingness::{
    accuracy, fit_logistic_irls, fit_missingness_model, littles_test, missingness_table, stratified_split,
    wald_mcar_test, IrlsOptions, MissingnessConfig, SparseDesign,
};
use crate::seed;
use crate::table::{mean, ColumnKind, Table};
use crate::trees::{fit_random_forest, ForestConfig, ForestTarget, Matrix, Sampling};

/// A rejection (or success) fraction with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub hits: usize,
    pub n: usize,
    pub rate: f64,
    pub se: f64,
}

impl Rate {
    pub fn new(hits: usize, n: usize) -> Self {
        let rate = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let se = if n == 0 { 0.0 } else { (rate * (1.0 - rate) / n as f64).sqrt() };
        Rate { hits, n, rate, se }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McarBenchConfig {
    pub target_feature: String,
    pub mechanisms: Vec<Mechanism>,
    pub p_m: Vec<f64>,
    pub n_reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub gam: GamConfig,
}

impl Default for McarBenchConfig {
    fn default() -> Self {
        McarBenchConfig {
            target_feature: "age".into(),
            mechanisms: vec![Mechanism::Mcar, Mechanism::Mar],
            p_m: vec![0.1, 0.2, 0.3],
            n_reps: 200,
            alpha: 0.05,
            seed: 0,
            gam: mcar_bench_gam(),
        }
    }
}

/// Rows of the surrogate table the calibration benchmark runs on.
pub const MCAR_BENCH_ROWS: usize = 10_000;

/// The surrogate table the calibration benchmark is meant for.
pub fn mcar_bench_base(seed_: u64) -> Result<Table> {
    surrogate_table(&SurrogateConfig {
        n_rows: MCAR_BENCH_ROWS,
        seed: seed_,
        ..SurrogateConfig::default()
    })
}

/// One unbagged, fully boosted fit. The missing-bin standard error comes
/// from a refit on the same rows, so it knows nothing of bootstrap or bag
/// variance, and an early-stopped fit leaves part of the missing group's
/// effect on correlated features; either one miscalibrates the test.
pub fn mcar_bench_gam() -> GamConfig {
    GamConfig {
        max_bins: 32,
        learning_rate: 0.3,
        max_rounds: 100,
        early_stopping: None,
        bags: 1,
        bootstrap: false,
        ..GamConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McarCell {
    pub mechanism: Mechanism,
    pub p_m: f64,
    pub wald: Rate,
    pub little: Rate,
    /// Replicates whose refit did not converge (counted as non-rejections).
    pub wald_nonconverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McarBenchResult {
    pub config: McarBenchConfig,
    pub cells: Vec<McarCell>,
}

impl McarBenchResult {
    pub fn cell(&self, mechanism: Mechanism, p_m: f64) -> Option<&McarCell> {
        self.cells.iter().find(|c| c.mechanism == mechanism && c.p_m == p_m)
    }

    /// Rejection rates laid out with one column per (mechanism, p_m).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<10}", "test");
        for c in &self.cells {
            let _ = write!(out, " {:>14}", format!("{}/{}", mechanism_name(c.mechanism), c.p_m));
        }
        out.push('\n');
        for (name, pick) in [("missing-bin", 0), ("little", 1)] {
            let _ = write!(out, "{name:<10}");
            for c in &self.cells {
                let r = if pick == 0 { c.wald } else { c.little };
                let _ = write!(out, " {:>14}", format!("{:.3}±{:.3}", r.rate, r.se));
            }
            out.push('\n');
        }
        out
    }
}

fn mechanism_name(m: Mechanism) -> &'static str {
    match m {
        Mechanism::Mcar => "MCAR",
        Mechanism::Mar => "MAR",
        Mechanism::Mnar => "MNAR",
    }
}

fn score_model_name(s: ScoreModel) -> &'static str {
    match s {
        ScoreModel::Linear => "linear",
        ScoreModel::Curvilinear => "curvilinear",
        ScoreModel::Quadratic => "quadratic",
    }
}

/// Masks `target_feature` of a complete table under each mechanism and
/// missing rate `n_reps` times, and records how often the missing-bin test
/// and Little's test reject at `alpha`. Mechanisms other than MCAR use the
/// lowest-scores protocol with a linear score.
pub fn run_mcar_benchmark(base: &Table, config: &McarBenchConfig) -> Result<McarBenchResult> {
    if config.n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be at least 1".into()));
    }
    let label = base
        .target()
        .map(|c| c.name().to_string())
        .ok_or_else(|| Error::InvalidInput("base table needs a binary target".into()))?;
    let gam = GamConfig {
        link: LinkChoice::Logistic,
        ..config.gam.clone()
    };
    let mut cells = Vec::new();
    for (mi, &mechanism) in config.mechanisms.iter().enumerate() {
        for (pi, &p_m) in config.p_m.iter().enumerate() {
            let cell_seed = seed::derive(config.seed, (mi * 1000 + pi) as u64);
            let outcomes: Vec<(bool, bool, bool)> = (0..config.n_reps)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = seed::derive(cell_seed, rep as u64);
                    let spec = SynthSpec::new(mechanism, p_m, &config.target_feature, rep_seed);
                    let masked = gen_missing(base, &spec)?;
                    let model = fit_gam(&masked.table, &label, &gam.clone().with_seed(seed::derive(rep_seed, 1)))?;
                    let wald = wald_mcar_test(&model, &masked.table, &config.target_feature, config.alpha)?;
                    let little = littles_test(&masked.table)?;
                    Ok((wald.reject_mcar, little.rejects(config.alpha), wald.converged))
                })
                .collect::<Result<_>>()?;
            let n = outcomes.len();
            cells.push(McarCell {
                mechanism,
                p_m,
                wald: Rate::new(outcomes.iter().filter(|o| o.0).count(), n),
                little: Rate::new(outcomes.iter().filter(|o| o.1).count(), n),
                wald_nonconverged: outcomes.iter().filter(|o| !o.2).count(),
            });
        }
    }
    Ok(McarBenchResult {
        config: config.clone(),
        cells,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Gam,
    Logistic,
    Forest,
    Knn,
}

impl Classifier {
    pub const ALL: [Classifier; 4] = [Classifier::Gam, Classifier::Logistic, Classifier::Forest, Classifier::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Gam => "GAM",
            Classifier::Logistic => "LR",
            Classifier::Forest => "RF",
            Classifier::Knn => "KNN",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessBenchConfig {
    pub target_feature: String,
    pub mechanisms: Vec<Mechanism>,
    pub score_models: Vec<ScoreModel>,
    pub p_m: Vec<f64>,
    pub n_reps: usize,
    pub seed: u64,
    pub protocol: MaskProtocol,
    pub noise_sd: f64,
    pub include_label: bool,
    pub test_fraction: f64,
    pub gam: GamConfig,
    pub forest_trees: usize,
    pub knn_k: usize,
    /// Ridge penalty of the logistic baseline (standardized inputs).
    pub logistic_ridge: f64,
}

impl Default for MissingnessBenchConfig {
    fn default() -> Self {
        MissingnessBenchConfig {
            target_feature: "age".into(),
            mechanisms: vec![Mechanism::Mar],
            score_models: vec![ScoreModel::Linear, ScoreModel::Curvilinear, ScoreModel::Quadratic],
            p_m: vec![0.1, 0.2, 0.3],
            n_reps: 20,
            seed: 0,
            protocol: MaskProtocol::Threshold,
            noise_sd: 1.0,
            include_label: false,
            test_fraction: 0.2,
            gam: GamConfig::fast(),
            forest_trees: 100,
            knn_k: 5,
            logistic_ridge: 1e-4,
        }
    }
}

/// Held-out accuracy of one classifier over the replicates of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
        } else {
            0.0
        };
        MeanStd { mean: m, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub mechanism: Mechanism,
    pub score_model: ScoreModel,
    pub p_m: f64,
    /// One entry per classifier, in [`Classifier::ALL`] order.
    pub accuracy: Vec<(Classifier, MeanStd)>,
    /// Raw per-replicate accuracies, same order.
    pub replicates: Vec<Vec<f64>>,
}

impl AccuracyCell {
    pub fn of(&self, classifier: Classifier) -> MeanStd {
        self.accuracy
            .iter()
            .find(|(c, _)| *c == classifier)
            .map(|(_, m)| *m)
            .expect("every classifier is reported")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessBenchResult {
    pub config: MissingnessBenchConfig,
    pub cells: Vec<AccuracyCell>,
}

impl MissingnessBenchResult {
    pub fn cell(&self, mechanism: Mechanism, score_model: ScoreModel, p_m: f64) -> Option<&AccuracyCell> {
        self.cells
            .iter()
            .find(|c| c.mechanism == mechanism && c.score_model == score_model && c.p_m == p_m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<26}", "cell");
        for c in Classifier::ALL {
            let _ = write!(out, " {:>13}", c.name());
        }
        out.push('\n');
        for cell in &self.cells {
            let label = format!(
                "{}/{}/{}",
                mechanism_name(cell.mechanism),
                score_model_name(cell.score_model),
                cell.p_m
            );
            let _ = write!(out, "{label:<26}");
            for (_, m) in &cell.accuracy {
                let _ = write!(out, " {:>13}", format!("{:.3}±{:.3}", m.mean, m.std));
            }
            out.push('\n');
        }
        out
    }
}

/// Predicts the missingness of `target_feature` from the other columns
/// with the additive model and three baselines on a shared stratified
/// holdout, for every (mechanism, score model, p_m) cell.
pub fn run_missingness_benchmark(base: &Table, config: &MissingnessBenchConfig) -> Result<MissingnessBenchResult> {
    if config.n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be at least 1".into()));
    }
    if config.knn_k == 0 || config.forest_trees == 0 {
        return Err(Error::InvalidConfig("knn_k and forest_trees must be at least 1".into()));
    }
    let mut cells = Vec::new();
    let mut index = 0u64;
    for &mechanism in &config.mechanisms {
        for &score_model in &config.score_models {
            for &p_m in &config.p_m {
                let cell_seed = seed::derive(config.seed, index);
                index += 1;
                let reps: Vec<[f64; 4]> = (0..config.n_reps)
                    .into_par_iter()
                    .map(|rep| replicate(base, config, mechanism, score_model, p_m, seed::derive(cell_seed, rep as u64)))
                    .collect::<Result<_>>()?;
                let replicates: Vec<Vec<f64>> = (0..4).map(|k| reps.iter().map(|r| r[k]).collect()).collect();
                cells.push(AccuracyCell {
                    mechanism,
                    score_model,
                    p_m,
                    accuracy: Classifier::ALL
                        .iter()
                        .zip(&replicates)
                        .map(|(&c, v)| (c, MeanStd::of(v)))
                        .collect(),
                    replicates,
                });
            }
        }
    }
    Ok(MissingnessBenchResult {
        config: config.clone(),
        cells,
    })
}

fn replicate(
    base: &Table,
    config: &MissingnessBenchConfig,
    mechanism: Mechanism,
    score_model: ScoreModel,
    p_m: f64,
    rep_seed: u64,
) -> Result<[f64; 4]> {
    let spec = SynthSpec {
        noise_sd: config.noise_sd,
        ..SynthSpec::new(mechanism, p_m, &config.target_feature, rep_seed)
            .with_score_model(score_model)
            .with_protocol(config.protocol)
    };
    let masked = gen_missing(base, &spec)?;
    let split_seed = seed::derive(rep_seed, 1);
    let mconfig = MissingnessConfig {
        gam: config.gam.clone().with_seed(seed::derive(rep_seed, 2)),
        test_fraction: config.test_fraction,
        seed: split_seed,
        encodings: Vec::new(),
    };
    let gam = fit_missingness_model(&masked.table, &config.target_feature, config.include_label, &mconfig)?;

    // the same split for the baselines
    let data = missingness_table(&masked.table, &config.target_feature, config.include_label)?;
    let target = data.target().expect("indicator target").values().to_vec();
    let (train, test) = stratified_split(&target, config.test_fraction, split_seed);
    let x = numeric_rows(&data)?;
    let (x_train, y_train) = pick(&x, &target, &train);
    let (x_test, y_test) = pick(&x, &target, &test);
    let (x_train, x_test) = standardize(&x_train, &x_test);

    let design = SparseDesign::with_intercept(&x_train)?;
    let lr = fit_logistic_irls(
        &design,
        &y_train,
        None,
        &IrlsOptions {
            ridge: config.logistic_ridge,
            ..IrlsOptions::default()
        },
    )?;
    let lr_scores: Vec<f64> = x_test.iter().map(|r| lr.predict(r)).collect();

    let p = x_train[0].len();
    let forest = fit_random_forest(
        &Matrix::from_rows(&x_train)?,
        ForestTarget::Classification {
            labels: &y_train.iter().map(|&v| v as u32).collect::<Vec<_>>(),
            n_classes: 2,
        },
        &ForestConfig {
            n_trees: config.forest_trees,
            mtry: Some(((p as f64).sqrt().floor() as usize).max(1)),
            sampling: Sampling::Bootstrap { fraction: 1.0 },
            max_depth: 64,
            min_leaf: 1,
            seed: seed::derive(rep_seed, 3),
        },
    )?;
    let rf_hits = x_test
        .iter()
        .zip(&y_test)
        .filter(|(r, &y)| f64::from(forest.vote(r)) == y)
        .count();
    let knn = knn_classify(&x_train, &y_train, &x_test, config.knn_k);
    let knn_hits = knn.iter().zip(&y_test).filter(|(a, b)| a == b).count();
    let n_test = y_test.len() as f64;
    Ok([
        gam.accuracy,
        accuracy(&lr_scores, &y_test, 0.5),
        rf_hits as f64 / n_test,
        knn_hits as f64 / n_test,
    ])
}

/// Non-label predictor rows; categorical codes are used as numbers and
/// missing cells are `NaN`.
fn numeric_rows(data: &Table) -> Result<Vec<Vec<f64>>> {
    let target = data.target_index();
    let cols: Vec<_> = data
        .columns()
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != target)
        .map(|(_, c)| c)
        .collect();
    if cols.is_empty() {
        return Err(Error::InvalidInput("no predictors".into()));
    }
    if cols.iter().any(|c| c.kind() == ColumnKind::Categorical) {
        return Err(Error::InvalidInput("baseline classifiers need numeric predictors".into()));
    }
    Ok((0..data.n_rows())
        .map(|i| cols.iter().map(|c| c.value(i).unwrap_or(f64::NAN)).collect())
        .collect())
}

fn pick(x: &[Vec<f64>], y: &[f64], rows: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (rows.iter().map(|&i| x[i].clone()).collect(), rows.iter().map(|&i| y[i]).collect())
}

/// Standardizes with training statistics; missing cells become 0 (the mean).
fn standardize(train: &[Vec<f64>], test: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let p = train[0].len();
    let stats: Vec<(f64, f64)> = (0..p)
        .map(|j| {
            let obs: Vec<f64> = train.iter().map(|r| r[j]).filter(|v| !v.is_nan()).collect();
            if obs.is_empty() {
                return (0.0, 1.0);
            }
            let m = mean(&obs);
            let var = obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / obs.len() as f64;
            (m, if var > 0.0 { var.sqrt() } else { 1.0 })
        })
        .collect();
    let apply = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(&stats)
                    .map(|(&v, &(m, s))| if v.is_nan() { 0.0 } else { (v - m) / s })
                    .collect()
            })
            .collect()
    };
    (apply(train), apply(test))
}

/// Majority vote of the `k` nearest training rows; distance is the mean
/// squared difference over columns present in both rows, ties broken by
/// training-row order, and a tied vote goes to the lower label.
pub fn knn_classify(train: &[Vec<f64>], labels: &[f64], test: &[Vec<f64>], k: usize) -> Vec<f64> {
    test.par_iter()
        .map(|row| {
            let mut near: Vec<(f64, usize)> = train
                .iter()
                .enumerate()
                .filter_map(|(i, t)| {
                    let (mut sum, mut shared) = (0.0, 0usize);
                    for (a, b) in row.iter().zip(t) {
                        if !a.is_nan() && !b.is_nan() {
                            sum += (a - b) * (a - b);
                            shared += 1;
                        }
                    }
                    (shared > 0).then(|| (sum / shared as f64, i))
                })
                .collect();
            let k = k.min(near.len());
            if k == 0 {
                return 0.0;
            }
            near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let ones = near[..k].iter().filter(|&&(_, i)| labels[i] == 1.0).count();
            if 2 * ones > k {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}
