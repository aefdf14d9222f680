//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gam::sigmoid;

/// Row-wise sparse design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDesign {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseDesign {
    pub fn new(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.iter().flatten().any(|&(c, v)| c >= n_cols || !v.is_finite()) {
            return Err(Error::InvalidInput("design entry out of range or non-finite".into()));
        }
        Ok(SparseDesign { n_cols, rows })
    }

    /// Dense rows with a leading intercept column.
    pub fn with_intercept(x: &[Vec<f64>]) -> Result<Self> {
        let p = x.first().map_or(0, Vec::len);
        let rows = x
            .iter()
            .map(|r| std::iter::once((0, 1.0)).chain(r.iter().enumerate().map(|(j, &v)| (j + 1, v))).collect())
            .collect();
        Self::new(p + 1, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(c, v)| beta[c] * v).sum())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Convergence when the largest coefficient step falls below this.
    pub tol: f64,
    /// L2 penalty on every coefficient but the first (the intercept).
    pub ridge: f64,
    /// Coefficients beyond this magnitude signal separation.
    pub max_coef: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iter: 50,
            tol: 1e-8,
            ridge: 0.0,
            max_coef: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrlsFit {
    pub coef: Vec<f64>,
    /// Inverse Fisher information at the estimate; `None` unless converged.
    pub covariance: Option<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl IrlsFit {
    /// Probability of a 1 for a row of predictors (no intercept column).
    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta = self.coef[0] + row.iter().zip(&self.coef[1..]).map(|(x, b)| x * b).sum::<f64>();
        sigmoid(eta)
    }
}

fn penalized_ll(design: &SparseDesign, y: &[f64], beta: &[f64], ridge: &[f64]) -> f64 {
    let ll: f64 = design
        .eta(beta)
        .iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum();
    ll - 0.5 * beta.iter().zip(ridge).map(|(b, r)| r * b * b).sum::<f64>()
}

fn information(design: &SparseDesign, beta: &[f64], ridge: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let p = design.n_cols;
    let mut h = DMatrix::<f64>::zeros(p, p);
    let probs: Vec<f64> = design.eta(beta).into_iter().map(sigmoid).collect();
    for (row, &pi) in design.rows.iter().zip(&probs) {
        let w = pi * (1.0 - pi);
        for &(a, va) in row {
            for &(b, vb) in row {
                h[(a, b)] += w * va * vb;
            }
        }
    }
    for (c, r) in ridge.iter().enumerate() {
        h[(c, c)] += r;
    }
    (h, probs)
}

pub fn fit_logistic_irls(
    design: &SparseDesign,
    y: &[f64],
    start: Option<&[f64]>,
    options: &IrlsOptions,
) -> Result<IrlsFit> {
    let mut ridge = vec![options.ridge; design.n_cols];
    if let Some(r) = ridge.first_mut() {
        *r = 0.0;
    }
    fit_logistic_irls_penalized(design, y, start, options, &ridge)
}

/// As [`fit_logistic_irls`], with a separate L2 penalty per coefficient
/// (`options.ridge` is ignored).
pub fn fit_logistic_irls_penalized(
    design: &SparseDesign,
    y: &[f64],
    start: Option<&[f64]>,
    options: &IrlsOptions,
    ridge: &[f64],
) -> Result<IrlsFit> {
    let p = design.n_cols;
    if ridge.len() != p || ridge.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidInput("need one non-negative penalty per coefficient".into()));
    }
    if y.len() != design.n_rows() {
        return Err(Error::InvalidInput("outcome length differs from design rows".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic outcome must be 0 or 1".into()));
    }
    let mut beta = match start {
        Some(s) if s.len() == p => s.to_vec(),
        Some(_) => return Err(Error::InvalidInput("start vector has the wrong length".into())),
        None => vec![0.0; p],
    };
    let mut ll = penalized_ll(design, y, &beta, ridge);
    // a warm start worse than all-zero coefficients is dropped: Newton steps
    // from far out on the flat tails of the likelihood crawl
    if start.is_some() {
        let zero = vec![0.0; p];
        let zero_ll = penalized_ll(design, y, &zero, ridge);
        if !(ll >= zero_ll) {
            beta = zero;
            ll = zero_ll;
        }
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let (h, probs) = information(design, &beta, ridge);
        let mut grad = DVector::<f64>::zeros(p);
        for (row, (&pi, &yi)) in design.rows.iter().zip(probs.iter().zip(y)) {
            for &(c, v) in row {
                grad[c] += (yi - pi) * v;
            }
        }
        for c in 0..p {
            grad[c] -= ridge[c] * beta[c];
        }
        let Some(chol) = h.cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ll;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            cand_ll = penalized_ll(design, y, &candidate, ridge);
            if cand_ll >= ll - 1e-12 * ll.abs() || t < 1e-10 {
                break;
            }
            t *= 0.5;
        }
        let max_step = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
        beta = candidate;
        ll = cand_ll;
        if beta.iter().any(|b| !b.is_finite() || b.abs() > options.max_coef) {
            break;
        }
        if max_step < options.tol {
            converged = true;
            break;
        }
    }
    let covariance = if converged {
        let (h, _) = information(design, &beta, ridge);
        h.cholesky().map(|c| c.inverse())
    } else {
        None
    };
    let converged = converged && covariance.is_some();
    Ok(IrlsFit {
        coef: beta,
        covariance,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_only_matches_logit_of_mean() {
        let y = [1.0, 0.0, 0.0, 1.0, 1.0];
        let design = SparseDesign::with_intercept(&vec![vec![]; 5]).unwrap();
        let fit = fit_logistic_irls(&design, &y, None, &IrlsOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coef[0] - (0.6f64 / 0.4).ln()).abs() < 1e-10);
        // Var = 1 / (n p (1 - p))
        let var = fit.covariance.unwrap()[(0, 0)];
        assert!((var - 1.0 / (5.0 * 0.6 * 0.4)).abs() < 1e-9);
    }

    #[test]
    fn two_group_log_odds_ratio() {
        // group A: 3 of 4 positive, group B: 1 of 4 positive
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![f64::from(i < 4)]).collect();
        let y = [1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let design = SparseDesign::with_intercept(&x).unwrap();
        let fit = fit_logistic_irls(&design, &y, None, &IrlsOptions::default()).unwrap();
        assert!((fit.coef[1] - 9f64.ln()).abs() < 1e-9);
        // Woolf variance: sum of reciprocal cell counts
        let var = fit.covariance.unwrap()[(1, 1)];
        assert!((var - (1.0 / 3.0 + 1.0 + 1.0 + 1.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn separation_is_flagged() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| f64::from(i >= 5)).collect();
        let design = SparseDesign::with_intercept(&x).unwrap();
        let fit = fit_logistic_irls(&design, &y, None, &IrlsOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.covariance.is_none());
    }
}
