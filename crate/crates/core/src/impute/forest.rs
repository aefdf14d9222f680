use serde::{Deserialize, Serialize};

use super::{mode, CellProvenance, Imputed};
use crate::error::{Error, Result};
use crate::seed;
use crate::table::{mean, ColumnKind, Table};
use crate::trees::{fit_random_forest, FeatureKind, ForestConfig, ForestTarget, Matrix, Sampling};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestImputerConfig {
    pub n_trees: usize,
    pub max_iter: usize,
    /// Features tried per split; the square root of the predictor count
    /// when absent.
    #[serde(default)]
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestImputerConfig {
    fn default() -> Self {
        ForestImputerConfig {
            n_trees: 100,
            max_iter: 10,
            mtry: None,
            seed: 0,
        }
    }
}

/// Iterative random-forest imputation.
///
/// Starts from mean (mode) fills, then repeatedly re-predicts each column's
/// missing cells from the other columns, visiting columns from the fewest
/// missing cells up. Stops when the normalized change between sweeps grows
/// for every variable type present, returning the sweep before; or after
/// `max_iter` sweeps. The target column is neither used nor imputed.
pub fn impute_iterative_forest(table: &Table, config: &ForestImputerConfig) -> Result<Imputed> {
    if config.max_iter == 0 || config.n_trees == 0 {
        return Err(Error::InvalidConfig("max_iter and n_trees must be at least 1".into()));
    }
    let target = table.target_index();
    let features: Vec<usize> = (0..table.n_cols()).filter(|&j| Some(j) != target).collect();
    if features.len() < 2 {
        return Err(Error::InvalidInput("iterative forest imputation needs at least two features".into()));
    }
    let cols: Vec<_> = features.iter().map(|&j| &table.columns()[j]).collect();
    let n = table.n_rows();
    // binary columns are imputed by classification, like categories
    let categorical: Vec<bool> = cols.iter().map(|c| c.kind() != ColumnKind::Continuous).collect();
    let missing: Vec<Vec<usize>> = cols
        .iter()
        .map(|c| (0..n).filter(|&i| c.is_missing_coded(i)).collect())
        .collect();
    if missing.iter().all(Vec::is_empty) {
        return Ok(Imputed {
            table: table.clone(),
            provenance: Vec::new(),
        });
    }

    let mut x: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for (f, c) in cols.iter().enumerate() {
        let obs = c.observed_values();
        let init = if categorical[f] { mode(&obs) } else { (!obs.is_empty()).then(|| mean(&obs)) }
            .ok_or_else(|| Error::column(c.name(), "every cell is missing"))?;
        let mut v = c.values().to_vec();
        for &i in &missing[f] {
            v[i] = init;
        }
        x.push(v);
    }
    let kinds: Vec<FeatureKind> = cols
        .iter()
        .map(|c| match c.kind() {
            ColumnKind::Categorical => FeatureKind::Categorical,
            _ => FeatureKind::Continuous,
        })
        .collect();

    let mut order: Vec<usize> = (0..cols.len()).filter(|&f| !missing[f].is_empty()).collect();
    order.sort_by_key(|&f| missing[f].len());
    let has_cont = order.iter().any(|&f| !categorical[f]);
    let has_cat = order.iter().any(|&f| categorical[f]);

    let mut previous = x.clone();
    let mut prev_delta = (f64::INFINITY, f64::INFINITY);
    let mut result = None;
    for sweep in 0..config.max_iter {
        let before = x.clone();
        for (pos, &f) in order.iter().enumerate() {
            let others: Vec<usize> = (0..cols.len()).filter(|&g| g != f).collect();
            let obs_rows: Vec<usize> = (0..n).filter(|i| missing[f].binary_search(i).is_err()).collect();
            if obs_rows.is_empty() {
                continue;
            }
            let train = Matrix::with_kinds(
                others.iter().map(|&g| obs_rows.iter().map(|&i| x[g][i]).collect()).collect(),
                others.iter().map(|&g| kinds[g]).collect(),
            )?;
            let p = others.len();
            let forest_config = ForestConfig {
                n_trees: config.n_trees,
                mtry: Some(config.mtry.unwrap_or(((p as f64).sqrt().floor() as usize).max(1)).min(p)),
                sampling: Sampling::Bootstrap { fraction: 1.0 },
                max_depth: 64,
                min_leaf: if categorical[f] { 1 } else { 5 },
                seed: seed::derive(config.seed, (sweep * cols.len() + pos) as u64),
            };
            let y: Vec<f64> = obs_rows.iter().map(|&i| x[f][i]).collect();
            let labels: Vec<u32>;
            let target = if categorical[f] {
                labels = y.iter().map(|&v| v as u32).collect();
                ForestTarget::Classification {
                    labels: &labels,
                    n_classes: cols[f].categories().len().max(2),
                }
            } else {
                ForestTarget::Regression(&y)
            };
            let forest = fit_random_forest(&train, target, &forest_config)?;
            for &i in &missing[f] {
                let row: Vec<f64> = others.iter().map(|&g| x[g][i]).collect();
                x[f][i] = forest.predict(&row);
            }
        }
        let (mut num, mut den, mut changed, mut n_cat) = (0.0, 0.0, 0usize, 0usize);
        for &f in &order {
            for &i in &missing[f] {
                if categorical[f] {
                    changed += usize::from(x[f][i] != before[f][i]);
                    n_cat += 1;
                } else {
                    num += (x[f][i] - before[f][i]).powi(2);
                    den += x[f][i].powi(2);
                }
            }
        }
        let delta = (
            if den > 0.0 { num / den } else { 0.0 },
            if n_cat > 0 { changed as f64 / n_cat as f64 } else { 0.0 },
        );
        let grew = (!has_cont || delta.0 > prev_delta.0) && (!has_cat || delta.1 > prev_delta.1);
        if sweep > 0 && grew {
            result = Some(previous.clone());
            break;
        }
        previous = x.clone();
        prev_delta = delta;
    }
    let x = result.unwrap_or(x);

    let mut out = table.clone();
    let mut provenance = Vec::new();
    for (f, c) in cols.iter().enumerate() {
        if missing[f].is_empty() {
            continue;
        }
        let fills: Vec<(usize, f64)> = missing[f].iter().map(|&i| (i, x[f][i])).collect();
        out = out.replace_column(c.with_filled(&fills)?)?;
        provenance.extend(fills.into_iter().map(|(row, value)| CellProvenance {
            row,
            column: c.name().to_string(),
            method: "iterative_forest".into(),
            value,
            fallback: false,
        }));
    }
    Ok(Imputed {
        table: out,
        provenance,
    })
}
