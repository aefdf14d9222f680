//! Tree learners shared by the additive booster, the forest imputer, the
//! missingness baselines, and the spike detector.

mod forest;
mod isolation;
mod regression;

pub use forest::{fit_random_forest, predict_forest, ForestConfig, ForestTarget, RandomForest, Sampling};
pub use isolation::{average_path_length, fit_isolation_forest, IsolationForest};
pub use regression::{fit_regression_tree, RegressionTree, SplitRule, TreeConfig, TreeData};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    /// Cells hold integer category codes; splits are one-vs-rest.
    Categorical,
}

/// Column-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    columns: Vec<Vec<f64>>,
    kinds: Vec<FeatureKind>,
    n_rows: usize,
}

impl Matrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let kinds = vec![FeatureKind::Continuous; columns.len()];
        Self::with_kinds(columns, kinds)
    }

    pub fn with_kinds(columns: Vec<Vec<f64>>, kinds: Vec<FeatureKind>) -> Result<Self> {
        if kinds.len() != columns.len() {
            return Err(Error::InvalidInput("one feature kind per column required".into()));
        }
        let n_rows = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::InvalidInput("ragged feature matrix".into()));
        }
        Ok(Matrix {
            columns,
            kinds,
            n_rows,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged feature rows".into()));
        }
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn kind(&self, j: usize) -> FeatureKind {
        self.kinds[j]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }
}
