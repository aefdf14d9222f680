use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Column, ColumnKind, MissingMarker};

/// Value bins of one feature.
///
/// Continuous bins are `(edges[k], edges[k+1]]`, except that the first bin
/// also holds `edges[0]`. Values outside `[edges[0], edges[B]]` clamp to the
/// nearest edge bin. A constant feature has `edges = [c, c]` and one bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueBins {
    Continuous { edges: Vec<f64> },
    Categorical { categories: Vec<String>, codes: Vec<u32> },
}

/// The dedicated bin for missing cells. `code` is the cell value that stands
/// for "missing" (a sentinel or a category code); `NaN` cells always land here.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingBin {
    pub code: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinLayout {
    pub values: ValueBins,
    pub missing: Option<MissingBin>,
    /// Training samples per bin, value bins first, then the missing bin.
    pub counts: Vec<f64>,
}

/// Where a bin sits, for display and for the indicator expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum BinInterval {
    Range { lo: f64, hi: f64, closed_left: bool },
    Category { name: String, code: u32 },
    Missing,
}

impl BinLayout {
    pub fn n_value_bins(&self) -> usize {
        match &self.values {
            ValueBins::Continuous { edges } => edges.len() - 1,
            ValueBins::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_value_bins() + usize::from(self.missing.is_some())
    }

    pub fn missing_index(&self) -> Option<usize> {
        self.missing.map(|_| self.n_value_bins())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.values, ValueBins::Continuous { .. })
    }

    pub fn edges(&self) -> Option<&[f64]> {
        match &self.values {
            ValueBins::Continuous { edges } => Some(edges),
            ValueBins::Categorical { .. } => None,
        }
    }

    pub fn total_count(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// True when `x` denotes a missing cell under this layout.
    pub fn is_missing_value(&self, x: f64) -> bool {
        x.is_nan() || self.missing.and_then(|m| m.code).is_some_and(|c| c == x)
    }

    /// Bin index of a raw cell value, or `None` when the value has no bin
    /// (missing without a missing bin, or an unknown category).
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if self.is_missing_value(x) {
            return self.missing_index();
        }
        match &self.values {
            ValueBins::Continuous { edges } => Some(continuous_bin(edges, x)),
            ValueBins::Categorical { codes, .. } => codes.iter().position(|&c| c as f64 == x),
        }
    }

    /// Width of each value bin (continuous layouts only).
    pub fn widths(&self) -> Option<Vec<f64>> {
        self.edges().map(|e| e.windows(2).map(|w| w[1] - w[0]).collect())
    }

    pub fn interval(&self, bin: usize) -> BinInterval {
        if Some(bin) == self.missing_index() {
            return BinInterval::Missing;
        }
        match &self.values {
            ValueBins::Continuous { edges } => BinInterval::Range {
                lo: edges[bin],
                hi: edges[bin + 1],
                closed_left: bin == 0,
            },
            ValueBins::Categorical { categories, codes } => BinInterval::Category {
                name: categories[bin].clone(),
                code: codes[bin],
            },
        }
    }
}

/// `(b_k, b_{k+1}]` lookup with clamping into the edge bins.
pub(crate) fn continuous_bin(edges: &[f64], x: f64) -> usize {
    let interior = &edges[1..edges.len() - 1];
    interior.partition_point(|e| *e < x)
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile edges over observed values, merged when duplicate; columns with
/// at most `max_bins` distinct values get one bin per value. Missing-coded
/// cells go to a dedicated missing bin.
pub fn build_bins(column: &Column, max_bins: usize) -> Result<BinLayout> {
    if max_bins < 2 {
        return Err(Error::InvalidConfig("max_bins must be at least 2".into()));
    }
    let observed = column.observed_values();
    if observed.is_empty() {
        return Err(Error::column(column.name(), "no observed values to bin"));
    }
    let n_missing = column.len() - observed.len();
    let missing_code = match column.marker() {
        Some(MissingMarker::Sentinel(s)) => Some(s),
        Some(MissingMarker::Category(c)) => Some(c as f64),
        _ => None,
    };
    let missing = (n_missing > 0).then_some(MissingBin { code: missing_code });

    let values = match column.kind() {
        ColumnKind::Categorical => {
            let missing_cat = match column.marker() {
                Some(MissingMarker::Category(c)) => Some(c),
                _ => None,
            };
            let (categories, codes): (Vec<String>, Vec<u32>) = column
                .categories()
                .iter()
                .enumerate()
                .filter(|(c, _)| Some(*c as u32) != missing_cat)
                .map(|(c, name)| (name.clone(), c as u32))
                .unzip();
            ValueBins::Categorical { categories, codes }
        }
        _ => ValueBins::Continuous {
            edges: continuous_edges(&observed, max_bins),
        },
    };
    let mut layout = BinLayout {
        values,
        missing,
        counts: Vec::new(),
    };
    layout.counts = count_bins(&layout, column.values());
    if let ValueBins::Continuous { edges } = &mut layout.values {
        // drop cuts that bound an empty value bin
        let mut k = 0;
        while k < layout.counts.len() && edges.len() > 2 {
            let n_value = edges.len() - 1;
            if k < n_value && layout.counts[k] == 0.0 {
                let drop = if k == 0 { 1 } else { k };
                edges.remove(drop);
                let merged = layout.counts.remove(k);
                let into = if k == 0 { 0 } else { k - 1 };
                layout.counts[into] += merged;
                k = 0;
            } else {
                k += 1;
            }
        }
    }
    Ok(layout)
}

fn continuous_edges(observed: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = observed.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    if min == max {
        return vec![min, min];
    }
    let mut distinct = sorted.clone();
    distinct.dedup();
    let mut edges = vec![min];
    if distinct.len() <= max_bins {
        for w in distinct.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            edges.push(if mid < w[1] { mid } else { w[0] });
        }
    } else {
        for k in 1..max_bins {
            let q = quantile_sorted(&sorted, k as f64 / max_bins as f64);
            if q > min && q < max {
                edges.push(q);
            }
        }
    }
    edges.push(max);
    edges.dedup();
    edges
}

/// Counts the cells of `values` per bin of `layout`; unknown cells are skipped.
pub fn count_bins(layout: &BinLayout, values: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; layout.n_bins()];
    for &v in values {
        if let Some(b) = layout.bin_of(v) {
            counts[b] += 1.0;
        }
    }
    counts
}
