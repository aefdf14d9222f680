use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc};
use super::separated::{split_shape, OffsetEncoding, SeparatedCurves};
use crate::error::{Error, Result};
use crate::gam::{fit_gam, variable_importance, GamConfig, GamModel, LinkChoice};
use crate::seed;
use crate::table::{Column, ColumnKind, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessConfig {
    pub gam: GamConfig,
    /// Share of rows held out for evaluation, stratified by the indicator.
    pub test_fraction: f64,
    pub seed: u64,
    /// Predictors that were offset-encoded; their shapes are split into
    /// observed and imputed curves in the report. Their layouts must be
    /// present in `gam.layouts`.
    #[serde(default)]
    pub encodings: Vec<OffsetEncoding>,
}

impl Default for MissingnessConfig {
    fn default() -> Self {
        MissingnessConfig {
            gam: GamConfig::default(),
            test_fraction: 0.2,
            seed: 0,
            encodings: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessReport {
    pub feature: String,
    pub model: GamModel,
    pub auc: f64,
    /// At a probability threshold of 0.5.
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub top_predictors: Vec<(String, f64)>,
    pub separated_shapes: Vec<SeparatedCurves>,
}

/// Name of the indicator column built by [`fit_missingness_model`].
pub fn indicator_name(feature: &str) -> String {
    format!("{feature}__is_missing")
}

/// Row indices `(train, test)` with each class split in proportion.
pub fn stratified_split(labels: &[f64], test_fraction: f64, seed_: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed_);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0.0, 1.0] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        let k = (test_fraction * rows.len() as f64).round() as usize;
        test.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// The predictors and the 0/1 missingness indicator of `feature`, as a table
/// whose target is the indicator. The label column is kept as a predictor
/// only when `include_label` is set.
pub fn missingness_table(table: &Table, feature: &str, include_label: bool) -> Result<Table> {
    let col = table.column(feature)?;
    let indicator: Vec<f64> = (0..col.len()).map(|i| f64::from(col.is_missing_coded(i))).collect();
    let label = table.target().map(|c| c.name().to_string());
    let mut columns: Vec<Column> = table
        .columns()
        .iter()
        .filter(|c| c.name() != feature && (include_label || Some(c.name()) != label.as_deref()))
        .cloned()
        .collect();
    let name = indicator_name(feature);
    columns.push(Column::numeric(&name, ColumnKind::Binary, indicator)?);
    Table::new(columns)?.with_target(&name)
}

/// Trains a logistic model that predicts whether `feature` is missing from
/// the other columns and evaluates it on a stratified holdout.
pub fn fit_missingness_model(
    table: &Table,
    feature: &str,
    include_label: bool,
    config: &MissingnessConfig,
) -> Result<MissingnessReport> {
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::InvalidConfig("test_fraction must lie in (0, 1)".into()));
    }
    let data = missingness_table(table, feature, include_label)?;
    let target = indicator_name(feature);
    let y = data.column(&target)?.values().to_vec();
    let n_missing = y.iter().filter(|&&v| v == 1.0).count();
    if n_missing == 0 || n_missing == y.len() {
        return Err(Error::column(feature, "missingness indicator is constant"));
    }
    let (train_rows, test_rows) = stratified_split(&y, config.test_fraction, config.seed);
    let train = data.take_rows(&train_rows);
    let test = data.take_rows(&test_rows);
    let gam = GamConfig {
        link: LinkChoice::Logistic,
        ..config.gam.clone()
    };
    let model = fit_gam(&train, &target, &gam)?;
    let scores: Vec<f64> = model.predict_table(&test)?.iter().map(|p| p.score).collect();
    let y_test = test.column(&target)?.values();
    let auc = auc(&scores, y_test)?;
    let accuracy = accuracy(&scores, y_test, 0.0);
    let separated_shapes = config
        .encodings
        .iter()
        .filter(|e| model.feature_index(&e.feature).is_ok())
        .map(|e| split_shape(model.shape(&e.feature)?, e))
        .collect::<Result<_>>()?;
    Ok(MissingnessReport {
        feature: feature.to_string(),
        top_predictors: variable_importance(&model),
        model,
        auc,
        accuracy,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        separated_shapes,
    })
}
