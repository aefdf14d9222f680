use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::irls::{fit_logistic_irls_penalized, IrlsOptions, SparseDesign};
use crate::error::{Error, Result};
use crate::gam::{count_bins, GamModel, Link};
use crate::table::Table;

/// L2 penalty on the refit's nuisance bin coefficients.
const NUISANCE_RIDGE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaldReport {
    pub feature: String,
    /// Score of the feature's missing bin.
    pub theta_hat: f64,
    /// Standard error; infinite when the refit did not converge.
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject_mcar: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Two-sided normal test of `theta_hat = 0`.
pub fn wald_report(feature: &str, theta_hat: f64, se: f64, alpha: f64) -> WaldReport {
    let (z, p_value) = if se.is_finite() && se > 0.0 {
        let z = theta_hat / se;
        (z, erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
    } else {
        (0.0, 1.0)
    };
    WaldReport {
        feature: feature.to_string(),
        theta_hat,
        se,
        z,
        p_value,
        alpha,
        reject_mcar: p_value < alpha,
        converged: se.is_finite(),
        iterations: 0,
    }
}

/// Tests whether the missing bin of `feature` carries signal about the
/// model's outcome. The standard error comes from a logistic refit of the
/// model's bin-indicator design on `table` (reference coding per feature,
/// warm-started at the model's scores), applied to the centered contrast
/// that the missing-bin score represents.
pub fn wald_mcar_test(model: &GamModel, table: &Table, feature: &str, alpha: f64) -> Result<WaldReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig("alpha must lie in (0, 1]".into()));
    }
    if model.link != Link::Logistic {
        return Err(Error::InvalidInput("the missing-bin test needs a logistic model".into()));
    }
    let target = model.shape(feature)?;
    let Some(miss) = target.layout.missing_index() else {
        return Err(Error::NothingToTest(format!("`{feature}` has no missing bin")));
    };
    let rows = model.rows_from_table(table)?;
    let y = table.column(&model.target)?.values().to_vec();
    let j_target = model.feature_index(feature)?;

    // column index of every (feature, bin); the reference bin has none
    let mut columns: Vec<Vec<Option<usize>>> = Vec::with_capacity(model.shapes.len());
    let mut counts_all = Vec::with_capacity(model.shapes.len());
    let mut refs = Vec::with_capacity(model.shapes.len());
    let mut next = 1;
    for (j, shape) in model.shapes.iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let counts = count_bins(&shape.layout, &values);
        let n_value = shape.layout.n_value_bins();
        let reference = (0..n_value)
            .max_by(|&a, &b| counts[a].total_cmp(&counts[b]).then(b.cmp(&a)))
            .filter(|&r| counts[r] > 0.0);
        let mut cols = vec![None; counts.len()];
        for (b, c) in cols.iter_mut().enumerate() {
            if Some(b) != reference && counts[b] > 0.0 {
                *c = Some(next);
                next += 1;
            }
        }
        columns.push(cols);
        counts_all.push(counts);
        refs.push(reference);
    }
    if counts_all[j_target][miss] == 0.0 {
        return Err(Error::NothingToTest(format!("`{feature}` has no missing cells in this table")));
    }

    let mut design_rows = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut entries = vec![(0, 1.0)];
        for (j, shape) in model.shapes.iter().enumerate() {
            let b = shape
                .layout
                .bin_of(row[j])
                .ok_or_else(|| Error::column(&shape.feature, format!("value {} has no bin", row[j])))?;
            if let Some(c) = columns[j][b] {
                entries.push((c, 1.0));
            }
        }
        design_rows.push(entries);
    }
    let design = SparseDesign::new(next, design_rows)?;

    let mut start = vec![0.0; next];
    start[0] = model.intercept;
    for (j, shape) in model.shapes.iter().enumerate() {
        let base = refs[j].map_or(0.0, |r| shape.scores[r]);
        start[0] += base;
        for (b, c) in columns[j].iter().enumerate() {
            if let Some(c) = c {
                start[*c] = shape.scores[b] - base;
            }
        }
    }
    // Sparse bins with one outcome class would push their coefficients off
    // to infinity; a light ridge holds them. The intercept and the tested
    // bin stay unpenalized, so separation of the missing bin is still seen.
    let miss_col = columns[j_target][miss].expect("missing bin has cells");
    let mut ridge = vec![NUISANCE_RIDGE; next];
    ridge[0] = 0.0;
    ridge[miss_col] = 0.0;
    let fit = fit_logistic_irls_penalized(&design, &y, Some(&start), &IrlsOptions::default(), &ridge)?;

    let theta_hat = target.scores[miss];
    let se = match &fit.covariance {
        Some(cov) if fit.converged => {
            let counts = &counts_all[j_target];
            let n: f64 = counts.iter().sum();
            let mut contrast = vec![0.0; next];
            for (b, c) in columns[j_target].iter().enumerate() {
                if let Some(c) = c {
                    contrast[*c] -= counts[b] / n;
                }
            }
            contrast[miss_col] += 1.0;

            let mut var = 0.0;
            for (a, &ca) in contrast.iter().enumerate() {
                if ca == 0.0 {
                    continue;
                }
                for (b, &cb) in contrast.iter().enumerate() {
                    var += ca * cb * cov[(a, b)];
                }
            }
            if var > 0.0 {
                var.sqrt()
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    };
    let mut report = wald_report(feature, theta_hat, se, alpha);
    report.converged = fit.converged && se.is_finite();
    report.iterations = fit.iterations;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_theta_never_rejects() {
        let r = wald_report("x", 0.0, 0.3, 0.05);
        assert_eq!(r.z, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject_mcar);
    }

    #[test]
    fn boundary_at_one_point_nine_six() {
        let r = wald_report("x", 0.392, 0.2, 0.05);
        assert!((r.z - 1.96).abs() < 1e-12);
        assert!((r.p_value - 0.05).abs() < 1e-3, "{}", r.p_value);
    }

    #[test]
    fn infinite_se_gives_unit_p() {
        let r = wald_report("x", 4.0, f64::INFINITY, 0.05);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.converged);
    }
}
