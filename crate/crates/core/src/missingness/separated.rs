//! Observed and imputed groups on one shape plot.
//!
//! Imputed cells are moved past the observed range by a fixed offset, so the
//! two groups fall into disjoint bins and the trained shape carries one curve
//! per group. The imputed curve is reported on the original axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gam::{build_bins, count_bins, fit_gam, BinLayout, GamConfig, GamModel, ShapeFunction, ValueBins};
use crate::table::{Column, ColumnKind, Table};

/// One bin of a curve on the feature's own axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSegment {
    pub lo: f64,
    pub hi: f64,
    pub score: f64,
    pub count: f64,
}

/// How a feature's imputed cells were moved out of the observed range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetEncoding {
    pub feature: String,
    pub offset: f64,
    /// Number of value bins that hold observed cells; the rest are imputed.
    pub observed_bins: usize,
    /// Bin edges of the imputed group before shifting.
    pub imputed_edges: Vec<f64>,
    /// Rows whose cells were imputed, ascending.
    pub imputed_rows: Vec<usize>,
    /// The imputed values as given, aligned with `imputed_rows`.
    pub imputed_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatedCurves {
    pub feature: String,
    pub observed: Vec<ShapeSegment>,
    pub imputed: Vec<ShapeSegment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatedShape {
    pub curves: SeparatedCurves,
    pub encoding: OffsetEncoding,
    pub model: GamModel,
}

/// Offset that puts every imputed value strictly above the observed maximum:
/// `max + 1 + range`, lowered by the most negative value involved so that
/// negative imputations cannot fall back into the observed range.
pub fn separation_offset(observed_min: f64, observed_max: f64, imputed_min: f64) -> f64 {
    let range = observed_max - observed_min;
    let low = observed_min.min(imputed_min).min(0.0);
    observed_max + 1.0 + range - low
}

/// Fills the missing cells of `feature` with `imputed_values + offset` and
/// returns the new table with a layout whose first bins are the ordinary
/// observed bins and whose remaining bins hold the shifted imputed values.
pub fn offset_encode(
    table: &Table,
    feature: &str,
    imputed_values: &[f64],
    max_bins: usize,
) -> Result<(Table, BinLayout, OffsetEncoding)> {
    let col = table.column(feature)?;
    if col.kind() == ColumnKind::Categorical {
        return Err(Error::column(feature, "offset encoding needs a numeric feature"));
    }
    let missing_rows: Vec<usize> = (0..col.len()).filter(|&i| col.is_missing_coded(i)).collect();
    if missing_rows.len() != imputed_values.len() {
        return Err(Error::column(
            feature,
            format!("{} imputed values for {} missing cells", imputed_values.len(), missing_rows.len()),
        ));
    }
    if imputed_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::column(feature, "imputed values must be finite"));
    }
    let observed_layout = build_bins(col, max_bins)?;
    let obs_edges = observed_layout.edges().expect("numeric column").to_vec();
    let observed_bins = obs_edges.len() - 1;
    let (obs_min, obs_max) = (obs_edges[0], obs_edges[observed_bins]);

    if missing_rows.is_empty() {
        let layout = BinLayout {
            values: ValueBins::Continuous { edges: obs_edges },
            missing: None,
            counts: observed_layout.counts[..observed_bins].to_vec(),
        };
        let enc = OffsetEncoding {
            feature: feature.to_string(),
            offset: 0.0,
            observed_bins,
            imputed_edges: Vec::new(),
            imputed_rows: Vec::new(),
            imputed_values: Vec::new(),
        };
        return Ok((table.clone(), layout, enc));
    }

    let imp_min = imputed_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let offset = separation_offset(obs_min, obs_max, imp_min);
    let imp_layout = build_bins(&Column::continuous(feature, imputed_values.to_vec())?, max_bins)?;
    let imputed_edges = imp_layout.edges().expect("numeric column").to_vec();

    let mut values = col.values().to_vec();
    for (&i, &v) in missing_rows.iter().zip(imputed_values) {
        values[i] = v + offset;
        assert!(values[i] > obs_max, "offset failed to separate the groups");
    }
    let mut edges = obs_edges;
    edges.extend(imputed_edges[1..].iter().map(|e| e + offset));
    let new_col = Column::numeric(feature, col.kind(), values)?;
    let mut layout = BinLayout {
        values: ValueBins::Continuous { edges },
        missing: None,
        counts: Vec::new(),
    };
    layout.counts = count_bins(&layout, new_col.values());
    let enc = OffsetEncoding {
        feature: feature.to_string(),
        offset,
        observed_bins,
        imputed_edges,
        imputed_rows: missing_rows,
        imputed_values: imputed_values.to_vec(),
    };
    Ok((table.replace_column(new_col)?, layout, enc))
}

/// Splits a shape trained on an offset-encoded feature into its two curves.
pub fn split_shape(shape: &ShapeFunction, encoding: &OffsetEncoding) -> Result<SeparatedCurves> {
    let edges = shape
        .layout
        .edges()
        .ok_or_else(|| Error::column(&shape.feature, "shape is not continuous"))?;
    let n_obs = encoding.observed_bins;
    let n_imp = encoding.imputed_edges.len().saturating_sub(1);
    if edges.len() - 1 != n_obs + n_imp {
        return Err(Error::StructuralMismatch(format!(
            "shape of `{}` does not match its offset encoding",
            shape.feature
        )));
    }
    let observed = (0..n_obs)
        .map(|k| ShapeSegment {
            lo: edges[k],
            hi: edges[k + 1],
            score: shape.scores[k],
            count: shape.layout.counts[k],
        })
        .collect();
    let ie = &encoding.imputed_edges;
    let imputed = (0..n_imp)
        .map(|k| ShapeSegment {
            lo: ie[k],
            hi: ie[k + 1],
            score: shape.scores[n_obs + k],
            count: shape.layout.counts[n_obs + k],
        })
        .collect();
    Ok(SeparatedCurves {
        feature: shape.feature.clone(),
        observed,
        imputed,
    })
}

/// Trains a model on the offset-encoded table and returns the observed and
/// imputed curves of `feature`.
pub fn separated_shape(
    table: &Table,
    feature: &str,
    imputed_values: &[f64],
    target: &str,
    config: &GamConfig,
) -> Result<SeparatedShape> {
    let (encoded, layout, encoding) = offset_encode(table, feature, imputed_values, config.max_bins)?;
    let mut config = config.clone();
    config.layouts.insert(feature.to_string(), layout);
    let model = fit_gam(&encoded, target, &config)?;
    let curves = split_shape(model.shape(feature)?, &encoding)?;
    Ok(SeparatedShape {
        curves,
        encoding,
        model,
    })
}
