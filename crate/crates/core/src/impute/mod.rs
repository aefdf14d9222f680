//! Imputers and the spike audit of models trained on imputed data.

mod audit;
mod forest;
mod knn;
mod simple;

pub use audit::{audit_imputation, second_order_diff, AuditReport, AuditStatistic, SpikeAudit, Verdict};
pub use forest::{impute_iterative_forest, ForestImputerConfig};
pub use knn::impute_knn;
pub use simple::{impute_simple, SimpleMethod};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{ColumnKind, Table};

/// Where one imputed cell came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellProvenance {
    pub row: usize,
    pub column: String,
    pub method: String,
    pub value: f64,
    /// The method could not apply and the column mean (or mode) was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Imputed {
    pub table: Table,
    pub provenance: Vec<CellProvenance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum ImputerConfig {
    Mean,
    Median,
    Constant { value: f64 },
    Knn { k: usize },
    IterativeForest(ForestImputerConfig),
}

/// Applies an imputer to every non-target column with missing cells.
pub fn impute(table: &Table, config: &ImputerConfig) -> Result<Imputed> {
    match config {
        ImputerConfig::Knn { k } => impute_knn(table, *k),
        ImputerConfig::IterativeForest(c) => impute_iterative_forest(table, c),
        simple => {
            let method = match simple {
                ImputerConfig::Mean => SimpleMethod::Mean,
                ImputerConfig::Median => SimpleMethod::Median,
                ImputerConfig::Constant { value } => SimpleMethod::Constant(*value),
                _ => unreachable!(),
            };
            let mut out = Imputed {
                table: table.clone(),
                provenance: Vec::new(),
            };
            for name in columns_with_missing(table) {
                let kind = table.column(&name)?.kind();
                if kind == ColumnKind::Categorical && !matches!(method, SimpleMethod::Constant(_)) {
                    return Err(Error::column(&name, "mean/median imputation needs a numeric column"));
                }
                let step = impute_simple(&out.table, &name, method)?;
                out.table = step.table;
                out.provenance.extend(step.provenance);
            }
            Ok(out)
        }
    }
}

/// Non-target columns holding at least one missing cell, in table order.
pub fn columns_with_missing(table: &Table) -> Vec<String> {
    let target = table.target_index();
    table
        .columns()
        .iter()
        .enumerate()
        .filter(|(j, c)| Some(*j) != target && c.n_missing() > 0)
        .map(|(_, c)| c.name().to_string())
        .collect()
}

pub(crate) fn missing_rows(table: &Table, column: &str) -> Result<Vec<usize>> {
    let col = table.column(column)?;
    Ok((0..col.len()).filter(|&i| col.is_missing_coded(i)).collect())
}

/// Mode of the observed codes of a categorical column; ties go to the
/// lowest code.
pub(crate) fn mode(values: &[f64]) -> Option<f64> {
    let mut counts = std::collections::BTreeMap::<u64, usize>::new();
    for v in values {
        *counts.entry(*v as u64).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(k, _)| k as f64)
}
