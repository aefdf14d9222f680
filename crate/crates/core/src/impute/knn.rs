use rayon::prelude::*;

use super::{mode, CellProvenance, Imputed};
use crate::error::{Error, Result};
use crate::table::{mean, ColumnKind, Table};

/// Fills every missing cell from the `k` nearest rows that observe the
/// column. Distances use the other non-target columns observed in both rows:
/// squared differences of standardized values (0/1 mismatch for categories),
/// averaged over the shared columns. Ties go to the lower row index. Donors
/// give their mean, or their mode for categorical columns.
pub fn impute_knn(table: &Table, k: usize) -> Result<Imputed> {
    let n = table.n_rows();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if n > 0 && k > n - 1 {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds n_rows - 1 = {}", n - 1)));
    }
    let target = table.target_index();
    let features: Vec<usize> = (0..table.n_cols()).filter(|&j| Some(j) != target).collect();
    let cols: Vec<_> = features.iter().map(|&j| &table.columns()[j]).collect();

    // standardized cells, None when missing
    let z: Vec<Vec<Option<f64>>> = cols
        .iter()
        .map(|c| {
            let obs = c.observed_values();
            let categorical = c.kind() == ColumnKind::Categorical;
            let (m, sd) = if categorical || obs.is_empty() {
                (0.0, 1.0)
            } else {
                let m = mean(&obs);
                let var = obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / obs.len() as f64;
                (m, if var > 0.0 { var.sqrt() } else { 1.0 })
            };
            (0..n)
                .map(|i| (!c.is_missing_coded(i)).then(|| (c.values()[i] - m) / sd))
                .collect()
        })
        .collect();
    let categorical: Vec<bool> = cols.iter().map(|c| c.kind() == ColumnKind::Categorical).collect();

    let mut out = table.clone();
    let mut provenance = Vec::new();
    for (f, col) in cols.iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| col.is_missing_coded(i)).collect();
        if rows.is_empty() {
            continue;
        }
        let donors: Vec<usize> = (0..n).filter(|&i| !col.is_missing_coded(i)).collect();
        let observed = col.observed_values();
        let fallback_value = if categorical[f] {
            mode(&observed)
        } else if observed.is_empty() {
            None
        } else {
            Some(mean(&observed))
        };
        let fills: Vec<(usize, f64, bool)> = rows
            .par_iter()
            .map(|&i| {
                let mut near: Vec<(f64, usize)> = donors
                    .iter()
                    .filter(|&&d| d != i)
                    .filter_map(|&d| distance(&z, &categorical, f, i, d).map(|dist| (dist, d)))
                    .collect();
                near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                near.truncate(k);
                if near.is_empty() {
                    return fallback_value
                        .map(|v| (i, v, true))
                        .ok_or_else(|| Error::column(col.name(), "every cell is missing"));
                }
                let values: Vec<f64> = near.iter().map(|&(_, d)| col.values()[d]).collect();
                let v = if categorical[f] {
                    mode(&values).expect("non-empty")
                } else {
                    mean(&values)
                };
                Ok((i, v, false))
            })
            .collect::<Result<_>>()?;
        let filled = out
            .column(col.name())?
            .with_filled(&fills.iter().map(|&(i, v, _)| (i, v)).collect::<Vec<_>>())?;
        out = out.replace_column(filled)?;
        provenance.extend(fills.into_iter().map(|(row, value, fallback)| CellProvenance {
            row,
            column: col.name().to_string(),
            method: format!("knn(k={k})"),
            value,
            fallback,
        }));
    }
    Ok(Imputed {
        table: out,
        provenance,
    })
}

/// Mean squared standardized difference over columns observed in both rows,
/// skipping the column being imputed; `None` when no column is shared.
fn distance(z: &[Vec<Option<f64>>], categorical: &[bool], skip: usize, a: usize, b: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (f, col) in z.iter().enumerate() {
        if f == skip {
            continue;
        }
        if let (Some(x), Some(y)) = (col[a], col[b]) {
            sum += if categorical[f] {
                f64::from(x != y)
            } else {
                (x - y) * (x - y)
            };
            shared += 1;
        }
    }
    (shared > 0).then(|| sum / shared as f64)
}
