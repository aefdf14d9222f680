//! Declarative edits to trained shape functions, recorded in the model.
//!
//! Regions are closed intervals in feature units. Bins that straddle a
//! region boundary are split there so that an edit changes exactly the
//! values inside the region. Cuts added this way are merged again once the
//! scores on both sides agree, so inverse edits restore the original model.
//! Values beyond the outermost bin edges follow the clamping rule of
//! prediction and share the score of the edge bin.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gam::{continuous_bin, count_bins, BinInterval, EditCut, GamModel, ShapeFunction, ValueBins};
use crate::table::Table;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditAction {
    /// Replace the region's scores with a constant.
    FlattenTo(f64),
    /// Replace the region's scores with the score of the bin holding a
    /// reference value (looked up before the edit).
    FlattenToBinOf(f64),
    ShiftBy(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub feature: String,
    /// `[lo, hi]`, inclusive.
    pub region: [f64; 2],
    pub action: EditAction,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EditScript {
    pub edits: Vec<Edit>,
    #[serde(default)]
    pub recenter: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl EditScript {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Audit entry appended to the model history for every applied script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub script: EditScript,
    /// Change of the intercept caused by recentering.
    pub intercept_change: f64,
    /// Number of value bins whose score changed.
    pub bins_changed: usize,
}

pub fn apply_edit(model: &GamModel, script: &EditScript) -> Result<GamModel> {
    apply(model, script, None)
}

/// Like [`apply_edit`], but recounts the bins of edited features on `table`
/// instead of splitting counts in proportion to bin width.
pub fn apply_edit_with_counts(model: &GamModel, script: &EditScript, table: &Table) -> Result<GamModel> {
    apply(model, script, Some(table))
}

fn apply(model: &GamModel, script: &EditScript, table: Option<&Table>) -> Result<GamModel> {
    let mut out = model.clone();
    let mut touched = BTreeSet::new();
    for edit in &script.edits {
        let j = out.feature_index(&edit.feature)?;
        apply_one(&mut out.shapes[j], edit)?;
        touched.insert(j);
    }
    if let Some(table) = table {
        let rows = out.rows_from_table(table)?;
        for &j in &touched {
            let values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            out.shapes[j].layout.counts = count_bins(&out.shapes[j].layout, &values);
        }
    }
    let mut intercept_change = 0.0;
    if script.recenter {
        for &j in &touched {
            let shape = &mut out.shapes[j];
            if shape.layout.total_count() == 0.0 {
                return Err(Error::Edit(format!("cannot recenter `{}`: zero total count", shape.feature)));
            }
            let mean = shape.weighted_mean();
            for s in &mut shape.scores {
                *s -= mean;
            }
            out.intercept += mean;
            intercept_change += mean;
        }
    }
    for &j in &touched {
        merge_equal_cuts(&mut out.shapes[j]);
    }
    let bins_changed = diff_models(model, &out)?
        .features
        .iter()
        .map(|f| f.bins.len())
        .sum();
    out.history.push(EditRecord {
        script: script.clone(),
        intercept_change,
        bins_changed,
    });
    Ok(out)
}

fn apply_one(shape: &mut ShapeFunction, edit: &Edit) -> Result<()> {
    let [lo, hi] = edit.region;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Edit(format!("region [{lo}, {hi}] is not a valid interval")));
    }
    let (first, last) = match &shape.layout.values {
        ValueBins::Continuous { edges } => (edges[0], edges[edges.len() - 1]),
        ValueBins::Categorical { .. } => {
            return Err(Error::Edit(format!("`{}` is categorical; regions need a continuous feature", shape.feature)))
        }
    };
    if hi < first || lo > last {
        return Err(Error::Edit(format!(
            "region [{lo}, {hi}] does not intersect the bins of `{}` ([{first}, {last}])",
            shape.feature
        )));
    }
    let reference = match edit.action {
        EditAction::FlattenToBinOf(x) => Some(
            shape
                .layout
                .bin_of(x)
                .map(|b| shape.scores[b])
                .ok_or_else(|| Error::Edit(format!("reference value {x} maps to no bin")))?,
        ),
        _ => None,
    };
    split_at(shape, lo.next_down());
    split_at(shape, hi);

    let edges = shape.layout.edges().expect("continuous").to_vec();
    for k in 0..edges.len() - 1 {
        let inside = if k == 0 {
            edges[0] <= hi && edges[1] >= lo
        } else {
            edges[k] < hi && edges[k + 1] >= lo
        };
        if !inside {
            continue;
        }
        let s = &mut shape.scores[k];
        *s = match edit.action {
            EditAction::FlattenTo(v) => v,
            EditAction::FlattenToBinOf(_) => reference.expect("looked up above"),
            EditAction::ShiftBy(d) => *s + d,
        };
    }
    if shape.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Edit("edit produced a non-finite score".into()));
    }
    Ok(())
}

/// Splits the bin containing `cut` into `(lo, cut]` and `(cut, hi]`, when
/// `cut` lies strictly inside the binned range and is not an edge already.
fn split_at(shape: &mut ShapeFunction, cut: f64) {
    let ValueBins::Continuous { edges } = &mut shape.layout.values else {
        return;
    };
    if !(cut > edges[0] && cut < edges[edges.len() - 1]) || edges.contains(&cut) {
        return;
    }
    let k = continuous_bin(edges, cut);
    let (a, b) = (edges[k], edges[k + 1]);
    let count = shape.layout.counts[k];
    let left = count * ((cut - a) / (b - a));
    edges.insert(k + 1, cut);
    shape.layout.counts[k] = left;
    shape.layout.counts.insert(k + 1, count - left);
    shape.scores.insert(k + 1, shape.scores[k]);
    shape.edit_cuts.push(EditCut { at: cut, count });
}

/// Removes edit-inserted cuts whose neighbouring scores are equal again.
fn merge_equal_cuts(shape: &mut ShapeFunction) {
    let mut i = shape.edit_cuts.len();
    while i > 0 {
        i -= 1;
        let cut = shape.edit_cuts[i];
        let ValueBins::Continuous { edges } = &mut shape.layout.values else {
            return;
        };
        let Some(e) = edges.iter().position(|&x| x == cut.at) else {
            shape.edit_cuts.remove(i);
            continue;
        };
        let (k_left, k_right) = (e - 1, e);
        if shape.scores[k_left] != shape.scores[k_right] {
            continue;
        }
        let sum = shape.layout.counts[k_left] + shape.layout.counts[k_right];
        let restored = if (sum - cut.count).abs() <= 1e-9 * cut.count.abs().max(1.0) {
            cut.count
        } else {
            sum
        };
        edges.remove(e);
        shape.layout.counts[k_left] = restored;
        shape.layout.counts.remove(k_right);
        shape.scores.remove(k_right);
        shape.edit_cuts.remove(i);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinChange {
    pub interval: BinInterval,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiff {
    pub feature: String,
    pub bins: Vec<BinChange>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelDiff {
    /// `(before, after)` when the intercept changed.
    pub intercept: Option<(f64, f64)>,
    /// Features with at least one changed bin.
    pub features: Vec<FeatureDiff>,
}

impl ModelDiff {
    pub fn is_empty(&self) -> bool {
        self.intercept.is_none() && self.features.is_empty()
    }
}

const DIFF_TOLERANCE: f64 = 1e-12;

/// Bins whose scores differ by more than `1e-12`. Continuous shapes are
/// compared on the union of both models' edges, so a model and its edited
/// (split) version are comparable.
pub fn diff_models(a: &GamModel, b: &GamModel) -> Result<ModelDiff> {
    if a.feature_names() != b.feature_names() {
        return Err(Error::StructuralMismatch("models have different features".into()));
    }
    let mut diff = ModelDiff::default();
    if (a.intercept - b.intercept).abs() > DIFF_TOLERANCE {
        diff.intercept = Some((a.intercept, b.intercept));
    }
    for (sa, sb) in a.shapes.iter().zip(&b.shapes) {
        let mismatch = |m: &str| Error::StructuralMismatch(format!("feature `{}`: {m}", sa.feature));
        if sa.layout.missing.is_some() != sb.layout.missing.is_some()
            || sa.layout.missing.and_then(|m| m.code).map(f64::to_bits)
                != sb.layout.missing.and_then(|m| m.code).map(f64::to_bits)
        {
            return Err(mismatch("missing bins differ"));
        }
        let mut bins = Vec::new();
        match (&sa.layout.values, &sb.layout.values) {
            (ValueBins::Continuous { edges: ea }, ValueBins::Continuous { edges: eb }) => {
                if ea[0] != eb[0] || ea[ea.len() - 1] != eb[eb.len() - 1] {
                    return Err(mismatch("bin ranges differ"));
                }
                let mut union: Vec<f64> = ea.iter().chain(eb).copied().collect();
                union.sort_by(f64::total_cmp);
                union.dedup();
                if union.len() == 1 {
                    union.push(union[0]);
                }
                for k in 0..union.len() - 1 {
                    // the right edge always belongs to its bin
                    let x = union[k + 1];
                    let before = sa.scores[continuous_bin(ea, x)];
                    let after = sb.scores[continuous_bin(eb, x)];
                    if (before - after).abs() > DIFF_TOLERANCE {
                        bins.push(BinChange {
                            interval: BinInterval::Range {
                                lo: union[k],
                                hi: union[k + 1],
                                closed_left: k == 0,
                            },
                            before,
                            after,
                        });
                    }
                }
            }
            (ValueBins::Categorical { codes: ca, .. }, ValueBins::Categorical { codes: cb, .. }) => {
                if ca != cb {
                    return Err(mismatch("categories differ"));
                }
                for k in 0..ca.len() {
                    if (sa.scores[k] - sb.scores[k]).abs() > DIFF_TOLERANCE {
                        bins.push(BinChange {
                            interval: sa.layout.interval(k),
                            before: sa.scores[k],
                            after: sb.scores[k],
                        });
                    }
                }
            }
            _ => return Err(mismatch("bin kinds differ")),
        }
        if let (Some(ma), Some(mb)) = (sa.layout.missing_index(), sb.layout.missing_index()) {
            if (sa.scores[ma] - sb.scores[mb]).abs() > DIFF_TOLERANCE {
                bins.push(BinChange {
                    interval: BinInterval::Missing,
                    before: sa.scores[ma],
                    after: sb.scores[mb],
                });
            }
        }
        if !bins.is_empty() {
            diff.features.push(FeatureDiff {
                feature: sa.feature.clone(),
                bins,
            });
        }
    }
    Ok(diff)
}
