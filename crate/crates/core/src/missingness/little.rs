use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::table::{ColumnKind, Table};

const EM_MAX_ITER: usize = 100;
const EM_TOL: f64 = 1e-6;
const RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LittleReport {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub n_patterns: usize,
    pub columns: Vec<String>,
    /// No cell was missing, so there was nothing to compare.
    pub nothing_to_test: bool,
    /// A pattern covariance was singular and had a ridge added.
    pub ridge_added: bool,
    pub em_iterations: usize,
    pub em_converged: bool,
}

impl LittleReport {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

struct Pattern {
    observed: Vec<usize>,
    rows: Vec<usize>,
}

/// Chi-square test of whether the means of the continuous columns differ
/// across missingness patterns, using EM estimates of the multivariate
/// normal mean and covariance. The target column, when set, is excluded.
pub fn littles_test(table: &Table) -> Result<LittleReport> {
    let target = table.target_index();
    let cols: Vec<usize> = (0..table.n_cols())
        .filter(|&j| Some(j) != target && table.columns()[j].kind() == ColumnKind::Continuous)
        .collect();
    if cols.len() < 2 {
        return Err(Error::InvalidInput("Little's test needs at least two continuous columns".into()));
    }
    let p = cols.len();
    let columns: Vec<String> = cols.iter().map(|&j| table.columns()[j].name().to_string()).collect();
    let n = table.n_rows();
    let data: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            cols.iter()
                .map(|&j| {
                    let c = &table.columns()[j];
                    (!c.is_missing_coded(i)).then(|| c.values()[i])
                })
                .collect()
        })
        .collect();

    let mut by_pattern: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for (i, row) in data.iter().enumerate() {
        let key: Vec<bool> = row.iter().map(Option::is_some).collect();
        if key.iter().any(|&o| o) {
            by_pattern.entry(key).or_default().push(i);
        }
    }
    let patterns: Vec<Pattern> = by_pattern
        .into_iter()
        .map(|(key, rows)| Pattern {
            observed: (0..p).filter(|&k| key[k]).collect(),
            rows,
        })
        .collect();
    let any_missing = patterns.iter().any(|pat| pat.observed.len() < p);
    if !any_missing {
        return Ok(LittleReport {
            chi2: 0.0,
            df: 0,
            p_value: 1.0,
            n_patterns: patterns.len(),
            columns,
            nothing_to_test: true,
            ridge_added: false,
            em_iterations: 0,
            em_converged: true,
        });
    }

    let (mu, sigma, iterations, converged, mut ridge_added) = em_normal(&data, &patterns, p)?;

    let mut chi2 = 0.0;
    let mut df = 0usize;
    for pat in &patterns {
        let o = &pat.observed;
        let m = pat.rows.len() as f64;
        let mean_o = DVector::from_iterator(
            o.len(),
            o.iter()
                .map(|&k| pat.rows.iter().map(|&i| data[i][k].unwrap()).sum::<f64>() / m),
        );
        let mu_o = DVector::from_iterator(o.len(), o.iter().map(|&k| mu[k]));
        let (inv, ridged) = inverse_block(&sigma, o);
        ridge_added |= ridged;
        let d = mean_o - mu_o;
        chi2 += m * (d.transpose() * &inv * &d)[(0, 0)];
        df += o.len();
    }
    let df = df - p;
    let p_value = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .sf(chi2.max(0.0))
    };
    Ok(LittleReport {
        chi2,
        df,
        p_value,
        n_patterns: patterns.len(),
        columns,
        nothing_to_test: false,
        ridge_added,
        em_iterations: iterations,
        em_converged: converged,
    })
}

/// Inverse of the covariance block on `idx`, with a ridge when singular.
fn inverse_block(sigma: &DMatrix<f64>, idx: &[usize]) -> (DMatrix<f64>, bool) {
    let block = DMatrix::from_fn(idx.len(), idx.len(), |a, b| sigma[(idx[a], idx[b])]);
    if let Some(c) = block.clone().cholesky() {
        return (c.inverse(), false);
    }
    let ridged = block + DMatrix::identity(idx.len(), idx.len()) * RIDGE;
    match ridged.clone().cholesky() {
        Some(c) => (c.inverse(), true),
        None => (ridged.pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(idx.len(), idx.len())), true),
    }
}

type EmResult = (Vec<f64>, DMatrix<f64>, usize, bool, bool);

fn em_normal(data: &[Vec<Option<f64>>], patterns: &[Pattern], p: usize) -> Result<EmResult> {
    let n: usize = patterns.iter().map(|pat| pat.rows.len()).sum();
    let nf = n as f64;
    // start from observed means and variances
    let mut mu = vec![0.0; p];
    let mut sigma = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        let obs: Vec<f64> = data.iter().filter_map(|r| r[k]).collect();
        if obs.is_empty() {
            return Err(Error::InvalidInput("a column has no observed values".into()));
        }
        let m = obs.iter().sum::<f64>() / obs.len() as f64;
        mu[k] = m;
        sigma[(k, k)] = obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / obs.len() as f64;
        if sigma[(k, k)] == 0.0 {
            sigma[(k, k)] = RIDGE;
        }
    }
    let mut ridge_added = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < EM_MAX_ITER {
        iterations += 1;
        let mut t1 = vec![0.0; p];
        let mut t2 = DMatrix::<f64>::zeros(p, p);
        for pat in patterns {
            let o = &pat.observed;
            let m: Vec<usize> = (0..p).filter(|k| !o.contains(k)).collect();
            let (inv_oo, ridged) = inverse_block(&sigma, o);
            ridge_added |= ridged;
            let s_mo = DMatrix::from_fn(m.len(), o.len(), |a, b| sigma[(m[a], o[b])]);
            let reg = &s_mo * &inv_oo;
            let s_mm = DMatrix::from_fn(m.len(), m.len(), |a, b| sigma[(m[a], m[b])]);
            let cond_cov = s_mm - &reg * s_mo.transpose();
            for &i in &pat.rows {
                let mut x = vec![0.0; p];
                let dev = DVector::from_iterator(o.len(), o.iter().map(|&k| data[i][k].unwrap() - mu[k]));
                for &k in o {
                    x[k] = data[i][k].unwrap();
                }
                let fill = &reg * dev;
                for (a, &k) in m.iter().enumerate() {
                    x[k] = mu[k] + fill[a];
                }
                for a in 0..p {
                    t1[a] += x[a];
                    for b in 0..=a {
                        t2[(a, b)] += x[a] * x[b];
                    }
                }
                for (a, &ka) in m.iter().enumerate() {
                    for (b, &kb) in m.iter().enumerate() {
                        if kb <= ka {
                            t2[(ka, kb)] += cond_cov[(a, b)];
                        }
                    }
                }
            }
        }
        let new_mu: Vec<f64> = t1.iter().map(|v| v / nf).collect();
        let mut new_sigma = DMatrix::<f64>::zeros(p, p);
        for a in 0..p {
            for b in 0..=a {
                let v = t2[(a, b)] / nf - new_mu[a] * new_mu[b];
                new_sigma[(a, b)] = v;
                new_sigma[(b, a)] = v;
            }
        }
        let change = new_mu
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .chain(new_sigma.iter().zip(sigma.iter()).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        mu = new_mu;
        sigma = new_sigma;
        if change < EM_TOL {
            converged = true;
            break;
        }
    }
    Ok((mu, sigma, iterations, converged, ridge_added))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Column;

    #[test]
    fn complete_data_has_nothing_to_test() {
        let t = Table::new(vec![
            Column::continuous("a", vec![1.0, 2.0, 3.0]).unwrap(),
            Column::continuous("b", vec![2.0, 1.0, 5.0]).unwrap(),
        ])
        .unwrap();
        let r = littles_test(&t).unwrap();
        assert_eq!((r.df, r.p_value, r.nothing_to_test), (0, 1.0, true));
    }

    #[test]
    fn needs_two_columns() {
        let t = Table::new(vec![Column::continuous("a", vec![1.0, f64::NAN]).unwrap()]).unwrap();
        assert!(littles_test(&t).is_err());
    }
}
