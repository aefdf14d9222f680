//! Semi-synthetic missingness: masks drawn under a chosen mechanism, shipped
//! surrogate tables, and the benchmark harnesses built on them.

mod bench;
mod surrogate;

pub use bench::{
    knn_classify, mcar_bench_base, mcar_bench_gam, run_mcar_benchmark, run_missingness_benchmark, AccuracyCell, Classifier, McarBenchConfig,
    McarBenchResult, McarCell, MeanStd, MissingnessBenchConfig, MissingnessBenchResult, Rate, MCAR_BENCH_ROWS,
};
pub use surrogate::{
    assumed_normal_surrogate, chained_surrogate, spike_surrogate, surrogate_table, AssumedNormal, SpikeSurrogate,
    SurrogateConfig, SURROGATE_FEATURES,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::table::{mean, Column, ColumnKind, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreModel {
    /// `w·x`
    Linear,
    /// `Σ w_j tanh(x_j)`
    Curvilinear,
    /// `w·x + v·x²`
    Quadratic,
}

/// Which end of the score distribution goes missing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskProtocol {
    /// The lowest-scoring rows.
    #[default]
    Lowest,
    /// Rows above the score threshold that leaves the quota, i.e. the
    /// highest-scoring rows.
    Threshold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mechanism: Mechanism,
    pub p_m: f64,
    pub score_model: ScoreModel,
    pub target_feature: String,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub protocol: MaskProtocol,
    /// Restricts the score to these columns; all usable columns otherwise.
    #[serde(default)]
    pub inputs: Option<Vec<String>>,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn new(mechanism: Mechanism, p_m: f64, target_feature: impl Into<String>, seed: u64) -> Self {
        SynthSpec {
            mechanism,
            p_m,
            score_model: ScoreModel::Linear,
            target_feature: target_feature.into(),
            noise_sd: 1.0,
            protocol: MaskProtocol::Lowest,
            inputs: None,
            seed,
        }
    }

    pub fn with_score_model(mut self, score_model: ScoreModel) -> Self {
        self.score_model = score_model;
        self
    }

    pub fn with_protocol(mut self, protocol: MaskProtocol) -> Self {
        self.protocol = protocol;
        self
    }
}

/// A table whose `target_feature` lost the masked cells, and the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Masked {
    pub table: Table,
    pub mask: Vec<bool>,
    /// Per-row scores that ordered the mask (empty under MCAR).
    pub scores: Vec<f64>,
}

/// Masks cells of `spec.target_feature`.
///
/// MCAR drops each cell independently with probability `p_m`. MAR and MNAR
/// standardize the score inputs (the other numeric non-label columns, plus
/// the target feature itself under MNAR), draw `N(0, 1)` coefficients, add
/// `N(0, noise_sd²)` noise and mask exactly `⌈n·p_m⌉` rows at the end of the
/// score distribution the protocol names.
pub fn gen_missing(table: &Table, spec: &SynthSpec) -> Result<Masked> {
    let n = table.n_rows();
    if !(spec.p_m > 0.0 && spec.p_m < 1.0) {
        return Err(Error::InvalidConfig("p_m must lie in (0, 1)".into()));
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::InvalidConfig("noise_sd must be finite and non-negative".into()));
    }
    if spec.p_m * (n as f64) < 1.0 {
        return Err(Error::InvalidInput(format!("p_m · n = {} masks no cell", spec.p_m * n as f64)));
    }
    let col = table.column(&spec.target_feature)?;
    if col.kind() == ColumnKind::Categorical {
        return Err(Error::column(&spec.target_feature, "masking needs a numeric column"));
    }
    if col.n_missing() > 0 {
        return Err(Error::column(&spec.target_feature, "target feature must be fully observed"));
    }
    if Some(spec.target_feature.as_str()) == table.target().map(Column::name) {
        return Err(Error::column(&spec.target_feature, "cannot mask the label column"));
    }

    let mut rng = seed::rng(spec.seed);
    let (mask, scores) = match spec.mechanism {
        Mechanism::Mcar => ((0..n).map(|_| rng.random::<f64>() < spec.p_m).collect(), Vec::new()),
        mechanism => {
            let inputs = score_inputs(table, spec, mechanism)?;
            let w: Vec<f64> = (0..inputs.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let v: Vec<f64> = match spec.score_model {
                ScoreModel::Quadratic => (0..inputs.len()).map(|_| StandardNormal.sample(&mut rng)).collect(),
                _ => Vec::new(),
            };
            let scores: Vec<f64> = (0..n)
                .map(|i| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let s: f64 = inputs
                        .iter()
                        .enumerate()
                        .map(|(j, x)| match spec.score_model {
                            ScoreModel::Linear => w[j] * x[i],
                            ScoreModel::Curvilinear => w[j] * x[i].tanh(),
                            ScoreModel::Quadratic => w[j] * x[i] + v[j] * x[i] * x[i],
                        })
                        .sum();
                    s + spec.noise_sd * noise
                })
                .collect();
            let quota = (spec.p_m * n as f64).ceil() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            if spec.protocol == MaskProtocol::Threshold {
                order.reverse();
            }
            let mut mask = vec![false; n];
            for &i in &order[..quota] {
                mask[i] = true;
            }
            (mask, scores)
        }
    };
    let values = col
        .values()
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { f64::NAN } else { v })
        .collect();
    let masked = Column::numeric(col.name(), col.kind(), values)?;
    Ok(Masked {
        table: table.replace_column(masked)?,
        mask,
        scores,
    })
}

/// Standardized score inputs; missing cells sit at the mean (zero).
fn score_inputs(table: &Table, spec: &SynthSpec, mechanism: Mechanism) -> Result<Vec<Vec<f64>>> {
    let label = table.target().map(|c| c.name().to_string());
    let names: Vec<String> = match &spec.inputs {
        Some(names) => {
            if mechanism == Mechanism::Mar && names.contains(&spec.target_feature) {
                return Err(Error::InvalidConfig("MAR scores cannot use the target feature".into()));
            }
            names.clone()
        }
        None => table
            .columns()
            .iter()
            .filter(|c| c.kind() != ColumnKind::Categorical && Some(c.name()) != label.as_deref())
            .filter(|c| mechanism == Mechanism::Mnar || c.name() != spec.target_feature)
            .map(|c| c.name().to_string())
            .collect(),
    };
    if names.is_empty() {
        return Err(Error::InvalidInput("no columns to build a missingness score from".into()));
    }
    names
        .iter()
        .map(|name| {
            let col = table.column(name)?;
            if col.kind() == ColumnKind::Categorical {
                return Err(Error::column(name, "score inputs must be numeric"));
            }
            let obs = col.observed_values();
            let m = if obs.is_empty() { 0.0 } else { mean(&obs) };
            let var = obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / obs.len().max(1) as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            Ok((0..col.len())
                .map(|i| col.value(i).map_or(0.0, |v| (v - m) / sd))
                .collect())
        })
        .collect()
}
