use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::bins::{BinInterval, BinLayout, ValueBins};
use super::GamConfig;
use crate::edit::EditRecord;
use crate::error::{Error, Result};
use crate::table::{ColumnKind, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    pub fn inverse(self, score: f64) -> f64 {
        match self {
            Link::Identity => score,
            Link::Logistic => sigmoid(score),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Piecewise-constant contribution of one feature: one score per bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub feature: String,
    pub layout: BinLayout,
    pub scores: Vec<f64>,
    /// Edges inserted by edits rather than by binning.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edit_cuts: Vec<EditCut>,
}

/// An edge added by an edit, with the count of the bin it split so that
/// merging the two halves back restores the count exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditCut {
    pub at: f64,
    pub count: f64,
}

impl ShapeFunction {
    pub fn score_of(&self, x: f64) -> Result<f64> {
        self.layout
            .bin_of(x)
            .map(|b| self.scores[b])
            .ok_or_else(|| Error::column(&self.feature, format!("value {x} falls in no bin")))
    }

    /// Count-weighted mean score; zero for a centered shape.
    pub fn weighted_mean(&self) -> f64 {
        let total = self.layout.total_count();
        if total == 0.0 {
            return 0.0;
        }
        self.scores
            .iter()
            .zip(&self.layout.counts)
            .map(|(s, c)| s * c)
            .sum::<f64>()
            / total
    }
}

/// One term of the indicator expansion `theta * 1{x in interval}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorTerm {
    pub bin: usize,
    pub interval: BinInterval,
    pub theta: f64,
    pub count: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub probability: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub intercept: f64,
    pub link: Link,
    pub target: String,
    pub shapes: Vec<ShapeFunction>,
    pub config: GamConfig,
    pub n_train: usize,
    #[serde(default)]
    pub history: Vec<EditRecord>,
}

impl GamModel {
    pub fn feature_names(&self) -> Vec<String> {
        self.shapes.iter().map(|s| s.feature.clone()).collect()
    }

    pub fn feature_index(&self, feature: &str) -> Result<usize> {
        self.shapes
            .iter()
            .position(|s| s.feature == feature)
            .ok_or_else(|| Error::UnknownColumn(feature.to_string()))
    }

    pub fn shape(&self, feature: &str) -> Result<&ShapeFunction> {
        Ok(&self.shapes[self.feature_index(feature)?])
    }

    /// Additive score for one row of raw values, ordered as `feature_names()`.
    pub fn score_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.shapes.len() {
            return Err(Error::InvalidInput(format!(
                "row has {} values, model has {} features",
                row.len(),
                self.shapes.len()
            )));
        }
        let mut score = self.intercept;
        for (shape, &x) in self.shapes.iter().zip(row) {
            score += shape.score_of(x)?;
        }
        Ok(score)
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        let score = self.score_row(row)?;
        Ok(Prediction {
            score,
            probability: (self.link == Link::Logistic).then(|| sigmoid(score)),
        })
    }

    /// Raw rows for every table row, with categorical codes remapped onto the
    /// model's vocabulary by category name.
    pub fn rows_from_table(&self, table: &Table) -> Result<Vec<Vec<f64>>> {
        let mut columns = Vec::with_capacity(self.shapes.len());
        for shape in &self.shapes {
            let col = table.column(&shape.feature)?;
            let values: Vec<f64> = match (&shape.layout.values, col.kind()) {
                (ValueBins::Categorical { categories, codes }, ColumnKind::Categorical) => {
                    let by_name: HashMap<&str, u32> =
                        categories.iter().map(String::as_str).zip(codes.iter().copied()).collect();
                    let missing_code = shape.layout.missing.and_then(|m| m.code);
                    (0..col.len())
                        .map(|i| {
                            if col.is_missing_coded(i) {
                                return Ok(missing_code.unwrap_or(f64::NAN));
                            }
                            let name = &col.categories()[col.values()[i] as usize];
                            by_name.get(name.as_str()).map(|&c| c as f64).ok_or_else(|| {
                                Error::column(&shape.feature, format!("unknown category `{name}`"))
                            })
                        })
                        .collect::<Result<_>>()?
                }
                (ValueBins::Categorical { .. }, _) | (ValueBins::Continuous { .. }, ColumnKind::Categorical) => {
                    return Err(Error::column(&shape.feature, "column kind does not match the model"));
                }
                (ValueBins::Continuous { .. }, _) => {
                    let code = shape.layout.missing.and_then(|m| m.code);
                    (0..col.len())
                        .map(|i| match (col.missing_mask()[i], code) {
                            (true, Some(c)) => c,
                            _ => col.values()[i],
                        })
                        .collect()
                }
            };
            columns.push(values);
        }
        Ok((0..table.n_rows())
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect())
    }

    pub fn predict_table(&self, table: &Table) -> Result<Vec<Prediction>> {
        self.rows_from_table(table)?
            .iter()
            .map(|r| self.predict(r))
            .collect()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }
}

pub fn predict(model: &GamModel, row: &[f64]) -> Result<Prediction> {
    model.predict(row)
}

pub fn shape_of<'a>(model: &'a GamModel, feature: &str) -> Result<&'a ShapeFunction> {
    model.shape(feature)
}

/// The shape as a list of indicator terms, one per bin.
pub fn to_indicator_form(model: &GamModel, feature: &str) -> Result<Vec<IndicatorTerm>> {
    let shape = model.shape(feature)?;
    Ok((0..shape.layout.n_bins())
        .map(|b| IndicatorTerm {
            bin: b,
            interval: shape.layout.interval(b),
            theta: shape.scores[b],
            count: shape.layout.counts[b],
        })
        .collect())
}

/// Evaluates an indicator expansion at `x`. Values outside the binned range
/// clamp to the edge terms, as in prediction.
pub fn eval_indicator_form(terms: &[IndicatorTerm], x: f64, missing_code: Option<f64>) -> f64 {
    let is_missing = x.is_nan() || missing_code == Some(x);
    let ranges: Vec<&IndicatorTerm> = terms
        .iter()
        .filter(|t| matches!(t.interval, BinInterval::Range { .. }))
        .collect();
    let last = ranges.len().saturating_sub(1);
    let mut total = 0.0;
    for t in terms {
        let hit = match &t.interval {
            BinInterval::Missing => is_missing,
            _ if is_missing => false,
            BinInterval::Category { code, .. } => *code as f64 == x,
            BinInterval::Range { lo, hi, closed_left } => {
                let pos = ranges.iter().position(|r| r.bin == t.bin).unwrap_or(0);
                let above_lo = x > *lo || (*closed_left && x >= *lo) || pos == 0;
                let below_hi = x <= *hi || pos == last;
                above_lo && below_hi
            }
        };
        if hit {
            total += t.theta;
        }
    }
    total
}

/// Density-weighted mean absolute score per feature, descending; ties keep
/// feature order.
pub fn variable_importance(model: &GamModel) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = model
        .shapes
        .iter()
        .map(|s| {
            let total = s.layout.total_count();
            let imp = if total > 0.0 {
                s.scores
                    .iter()
                    .zip(&s.layout.counts)
                    .map(|(t, c)| c / total * t.abs())
                    .sum()
            } else {
                0.0
            };
            (s.feature.clone(), imp)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}
