//! Additive models with piecewise-constant shape functions, trained by bagged
//! cyclic boosting of shallow per-feature trees.

mod bins;
mod boost;
mod io;
mod model;

pub use bins::{build_bins, count_bins, BinInterval, BinLayout, MissingBin, ValueBins};
pub use boost::{fit_gam, fit_gam_with_trace, BagTrace, FitTrace};
pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use model::{
    eval_indicator_form, predict, EditCut, shape_of, sigmoid, to_indicator_form, variable_importance, GamModel,
    IndicatorTerm, Link, Prediction, ShapeFunction,
};

pub(crate) use bins::continuous_bin;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkChoice {
    /// Logistic when every target value is 0 or 1, identity otherwise.
    #[default]
    Auto,
    Identity,
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Share of rows held out of each bag to monitor loss.
    pub holdout_fraction: f64,
    /// Rounds without holdout improvement before a bag stops.
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            holdout_fraction: 0.15,
            patience: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamConfig {
    pub max_bins: usize,
    pub learning_rate: f64,
    /// Upper bound on boosting cycles; each cycle visits every feature once.
    pub max_rounds: usize,
    pub early_stopping: Option<EarlyStopping>,
    pub bags: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub link: LinkChoice,
    pub seed: u64,
    /// Resample training rows with replacement in each bag.
    pub bootstrap: bool,
    /// Features to model, in order; every non-target column when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    /// Prebuilt layouts by feature name, used instead of [`build_bins`].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub layouts: BTreeMap<String, BinLayout>,
}

impl Default for GamConfig {
    fn default() -> Self {
        GamConfig {
            max_bins: 256,
            learning_rate: 0.01,
            max_rounds: 500,
            early_stopping: Some(EarlyStopping::default()),
            bags: 8,
            max_depth: 3,
            min_leaf: 2,
            link: LinkChoice::Auto,
            seed: 0,
            bootstrap: true,
            features: None,
            layouts: BTreeMap::new(),
        }
    }
}

impl GamConfig {
    /// A cheaper setting for repeated fits in benchmarks.
    pub fn fast() -> Self {
        GamConfig {
            max_bins: 32,
            learning_rate: 0.05,
            max_rounds: 200,
            early_stopping: Some(EarlyStopping {
                holdout_fraction: 0.15,
                patience: 20,
            }),
            bags: 2,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidConfig(m.into()));
        if self.max_bins < 2 {
            return bad("max_bins must be at least 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_rounds == 0 || self.bags == 0 {
            return bad("max_rounds and bags must be at least 1");
        }
        if self.max_depth == 0 || self.min_leaf == 0 {
            return bad("max_depth and min_leaf must be at least 1");
        }
        if let Some(es) = self.early_stopping {
            if !(es.holdout_fraction > 0.0 && es.holdout_fraction < 1.0) {
                return bad("holdout_fraction must lie in (0, 1)");
            }
        }
        Ok(())
    }
}
