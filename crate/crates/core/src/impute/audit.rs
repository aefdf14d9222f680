//! Spike audit: a bin whose score jumps away from its neighbours exactly
//! where an imputer piled its fills (the column mean or median) suggests the
//! model learned the imputation rather than the feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gam::{GamModel, ShapeFunction};
use crate::table::{mean, median, Table};
use crate::trees::fit_isolation_forest;

const FOREST_TREES: usize = 100;
const FOREST_SUBSAMPLE: usize = 256;
/// Statistics this close to a bin edge (relative) are taken to sit on it,
/// so summation round-off cannot move the mean off the edge its fills sit on.
const EDGE_SNAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatistic {
    #[default]
    Mean,
    Median,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Harmful,
    Harmless,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeAudit {
    pub feature: String,
    /// Second-order differences of bins `1..=B-2`.
    pub bin_diffs: Vec<f64>,
    /// Isolation scores aligned with `bin_diffs`.
    pub anomaly_scores: Vec<f64>,
    pub contamination: f64,
    /// Bin indices (into the value bins) judged outliers.
    pub flagged_bins: Vec<usize>,
    pub mean_bin: Option<usize>,
    pub median_bin: Option<usize>,
    pub statistic: AuditStatistic,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub audits: Vec<SpikeAudit>,
    /// Anomaly score at or above which a bin is flagged.
    pub threshold: Option<f64>,
    pub n_pooled: usize,
    pub verdict: Verdict,
}

impl AuditReport {
    pub fn harmful(&self) -> Vec<&str> {
        self.audits
            .iter()
            .filter(|a| a.verdict == Verdict::Harmful)
            .map(|a| a.feature.as_str())
            .collect()
    }
}

/// Discrete curvature of a shape over value bins of unequal width,
/// for interior bins `k = 1..=B-2`:
///
/// ```text
/// f''_k = [ (f_{k+1}-f_k)/((h_{k+1}+h_k)/2) - (f_k-f_{k-1})/((h_k+h_{k-1})/2) ]
///         / (h_k + h_{k+1}/2 + h_{k-1}/2)
/// ```
pub fn second_order_diff(shape: &ShapeFunction) -> Result<Vec<f64>> {
    let widths = shape
        .layout
        .widths()
        .ok_or_else(|| Error::column(&shape.feature, "second differences need a continuous shape"))?;
    second_order_diff_raw(&shape.scores[..widths.len()], &widths)
        .ok_or_else(|| Error::column(&shape.feature, "second differences need at least 3 bins"))
}

fn second_order_diff_raw(f: &[f64], h: &[f64]) -> Option<Vec<f64>> {
    if f.len() < 3 {
        return None;
    }
    Some(
        (1..f.len() - 1)
            .map(|k| {
                let right = (f[k + 1] - f[k]) / ((h[k + 1] + h[k]) / 2.0);
                let left = (f[k] - f[k - 1]) / ((h[k] + h[k - 1]) / 2.0);
                (right - left) / (h[k] + h[k + 1] / 2.0 + h[k - 1] / 2.0)
            })
            .collect(),
    )
}

/// Pools the second differences of every continuous shape with at least
/// three value bins, scores them with one isolation forest, flags the top
/// `contamination` share, and calls a feature harmful when the bin holding
/// its observed mean (or median) is flagged.
pub fn audit_imputation(
    model: &GamModel,
    table: &Table,
    statistic: AuditStatistic,
    contamination: f64,
    seed: u64,
) -> Result<AuditReport> {
    if !(contamination > 0.0 && contamination <= 1.0) {
        return Err(Error::InvalidConfig("contamination must lie in (0, 1]".into()));
    }
    let mut audits = Vec::with_capacity(model.shapes.len());
    let mut pooled = Vec::new();
    for shape in &model.shapes {
        let applicable = shape.layout.is_continuous() && shape.layout.n_value_bins() >= 3;
        let diffs = if applicable { second_order_diff(shape)? } else { Vec::new() };
        if diffs.iter().any(|d| !d.is_finite()) {
            return Err(Error::column(&shape.feature, "second differences are not finite (zero-width bins)"));
        }
        let (mean_bin, median_bin) = if applicable {
            let observed = table.column(&shape.feature)?.observed_values();
            if observed.is_empty() {
                (None, None)
            } else {
                (
                    locate(shape, mean(&observed)),
                    locate(shape, median(&observed)),
                )
            }
        } else {
            (None, None)
        };
        pooled.extend_from_slice(&diffs);
        audits.push(SpikeAudit {
            feature: shape.feature.clone(),
            bin_diffs: diffs,
            anomaly_scores: Vec::new(),
            contamination,
            flagged_bins: Vec::new(),
            mean_bin,
            median_bin,
            statistic,
            verdict: if applicable { Verdict::Harmless } else { Verdict::NotApplicable },
        });
    }
    if pooled.len() < 2 {
        for a in &mut audits {
            a.verdict = Verdict::NotApplicable;
        }
        return Ok(AuditReport {
            audits,
            threshold: None,
            n_pooled: pooled.len(),
            verdict: Verdict::NotApplicable,
        });
    }

    let points: Vec<Vec<f64>> = pooled.iter().map(|&d| vec![d]).collect();
    let forest = fit_isolation_forest(&points, FOREST_TREES, FOREST_SUBSAMPLE, seed)?;
    let scores: Vec<f64> = points.iter().map(|p| forest.anomaly_score(p)).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n_flag = ((contamination * pooled.len() as f64).ceil() as usize).clamp(1, pooled.len());
    let threshold = sorted[n_flag - 1];

    let mut offset = 0;
    for a in &mut audits {
        let m = a.bin_diffs.len();
        a.anomaly_scores = scores[offset..offset + m].to_vec();
        offset += m;
        a.flagged_bins = (0..m).filter(|&i| a.anomaly_scores[i] >= threshold).map(|i| i + 1).collect();
        if a.verdict == Verdict::NotApplicable {
            continue;
        }
        let bin = match statistic {
            AuditStatistic::Mean => a.mean_bin,
            AuditStatistic::Median => a.median_bin,
        };
        if bin.is_some_and(|b| a.flagged_bins.contains(&b)) {
            a.verdict = Verdict::Harmful;
        }
    }
    let verdict = if audits.iter().any(|a| a.verdict == Verdict::Harmful) {
        Verdict::Harmful
    } else if audits.iter().all(|a| a.verdict == Verdict::NotApplicable) {
        Verdict::NotApplicable
    } else {
        Verdict::Harmless
    };
    Ok(AuditReport {
        audits,
        threshold: Some(threshold),
        n_pooled: pooled.len(),
        verdict,
    })
}

/// Value bin holding `x`, using the same lookup as prediction.
fn locate(shape: &ShapeFunction, x: f64) -> Option<usize> {
    let edges = shape.layout.edges()?;
    let snapped = edges
        .iter()
        .copied()
        .find(|e| (x - e).abs() <= EDGE_SNAP * e.abs().max(1.0))
        .unwrap_or(x);
    shape.layout.bin_of(snapped).filter(|&b| b < shape.layout.n_value_bins())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_scores_have_zero_curvature() {
        let d = second_order_diff_raw(&[0.0, 1.0, 2.0, 3.0], &[1.0; 4]).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn single_peak() {
        // ((0-1)/1 - (1-0)/1) / (1 + 1/2 + 1/2) = -1
        assert_eq!(second_order_diff_raw(&[0.0, 1.0, 0.0], &[1.0; 3]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn zero_function_any_widths() {
        assert_eq!(second_order_diff_raw(&[0.0; 3], &[1.0, 2.0, 1.0]).unwrap(), vec![0.0]);
        assert!(second_order_diff_raw(&[0.0; 2], &[1.0; 2]).is_none());
    }
}
