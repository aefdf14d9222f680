use serde::{Deserialize, Serialize};

use super::{missing_rows, CellProvenance, Imputed};
use crate::error::{Error, Result};
use crate::table::{mean, median, ColumnKind, Table};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimpleMethod {
    Mean,
    Median,
    Constant(f64),
}

impl SimpleMethod {
    fn name(self) -> &'static str {
        match self {
            SimpleMethod::Mean => "mean",
            SimpleMethod::Median => "median",
            SimpleMethod::Constant(_) => "constant",
        }
    }
}

/// Replaces the missing cells of `feature` with a single value computed
/// from its observed cells (or given).
pub fn impute_simple(table: &Table, feature: &str, method: SimpleMethod) -> Result<Imputed> {
    let col = table.column(feature)?;
    let rows = missing_rows(table, feature)?;
    let observed = col.observed_values();
    let value = match method {
        SimpleMethod::Constant(v) => {
            if col.kind() == ColumnKind::Categorical
                && (v < 0.0 || v.fract() != 0.0 || v as usize >= col.categories().len())
            {
                return Err(Error::column(feature, format!("{v} is not a category code")));
            }
            v
        }
        SimpleMethod::Mean | SimpleMethod::Median => {
            if col.kind() == ColumnKind::Categorical {
                return Err(Error::column(feature, "mean/median imputation needs a numeric column"));
            }
            if observed.is_empty() {
                return Err(Error::column(feature, "every cell is missing"));
            }
            if method == SimpleMethod::Mean {
                mean(&observed)
            } else {
                median(&observed)
            }
        }
    };
    if !value.is_finite() {
        return Err(Error::column(feature, "imputation value must be finite"));
    }
    let fills: Vec<(usize, f64)> = rows.iter().map(|&r| (r, value)).collect();
    let filled = col.with_filled(&fills)?;
    let provenance = rows
        .iter()
        .map(|&row| CellProvenance {
            row,
            column: feature.to_string(),
            method: method.name().to_string(),
            value,
            fallback: false,
        })
        .collect();
    Ok(Imputed {
        table: table.replace_column(filled)?,
        provenance,
    })
}
