//! Shipped surrogate tables. Nothing here is real patient data; the column
//! names only suggest the kind of variable each one imitates.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gam::sigmoid;
use crate::impute::{impute_simple, SimpleMethod};
use crate::seed;
use crate::table::{Column, ColumnKind, Table};

/// Feature names of [`surrogate_table`], in column order. The first one is
/// the feature the calibration benchmark masks.
pub const SURROGATE_FEATURES: [&str; 14] = [
    "age",
    "heart_rate",
    "resp_rate",
    "sys_bp",
    "temperature",
    "pf_ratio",
    "bilirubin",
    "sodium",
    "potassium",
    "creatinine",
    "bun",
    "glucose",
    "wbc",
    "gcs",
];

/// Loading of each feature on the shared severity factor.
const LOADINGS: [f64; 14] = [0.9, 0.8, 0.75, -0.8, 0.7, -0.8, 0.8, -0.7, 0.75, 0.85, 0.85, 0.7, 0.8, -0.85];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub n_rows: usize,
    pub seed: u64,
    /// Log-odds per standard deviation of the latent age variable.
    pub age_effect: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            n_rows: 5000,
            seed: 0,
            age_effect: 1.5,
        }
    }
}

/// Marginal transform of a latent standard normal into feature units.
fn marginal(j: usize, z: f64) -> f64 {
    match j {
        0 => 65.0 + 15.0 * z,
        1 => 85.0 + 15.0 * z,
        2 => 18.0 + 4.0 * z,
        3 => 120.0 + 20.0 * z,
        4 => 37.0 + 0.6 * z,
        5 => 300.0 * (0.3 * z).exp(),
        6 => (0.3 + 0.8 * z).exp(),
        7 => 139.0 + 4.0 * z,
        8 => 4.2 + 0.5 * z,
        9 => (0.1 + 0.5 * z).exp(),
        10 => (2.9 + 0.5 * z).exp(),
        11 => (4.8 + 0.3 * z).exp(),
        12 => (2.2 + 0.4 * z).exp(),
        _ => 3.0 + 12.0 * sigmoid(1.7 * z),
    }
}

fn latent(rng: &mut impl Rng, loadings: &[f64]) -> Vec<f64> {
    let factor: f64 = StandardNormal.sample(rng);
    loadings
        .iter()
        .map(|&l| {
            let e: f64 = StandardNormal.sample(rng);
            l * factor + (1.0 - l * l).sqrt() * e
        })
        .collect()
}

/// A complete 14-feature table from a one-factor Gaussian with heterogeneous
/// marginals, plus a binary `outcome` (the table's target) whose log-odds
/// are driven mostly by age.
pub fn surrogate_table(config: &SurrogateConfig) -> Result<Table> {
    if config.n_rows == 0 {
        return Err(Error::InvalidConfig("n_rows must be positive".into()));
    }
    let mut rng = seed::rng(config.seed);
    let p = SURROGATE_FEATURES.len();
    let mut columns = vec![Vec::with_capacity(config.n_rows); p];
    let mut outcome = Vec::with_capacity(config.n_rows);
    for _ in 0..config.n_rows {
        let z = latent(&mut rng, &LOADINGS);
        for j in 0..p {
            columns[j].push(marginal(j, z[j]));
        }
        let logit = config.age_effect * z[0] + 0.4 * z[1].tanh() - 0.5 * z[5] + 0.3 * z[6]
            + 0.25 * z[10]
            - 0.3 * z[13];
        outcome.push(f64::from(rng.random::<f64>() < sigmoid(logit)));
    }
    let mut cols: Vec<Column> = SURROGATE_FEATURES
        .iter()
        .zip(columns)
        .map(|(name, v)| Column::continuous(*name, v))
        .collect::<Result<_>>()?;
    cols.push(Column::numeric("outcome", ColumnKind::Binary, outcome)?);
    Table::new(cols)?.with_target("outcome")
}

/// A mean-imputed table with a planted spike, and what was planted.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeSurrogate {
    /// After mean imputation.
    pub table: Table,
    /// Before imputation (missing cells are `NaN`).
    pub raw: Table,
    pub feature: String,
    /// Fully observed smooth-signal features.
    pub clean: Vec<String>,
    pub missing_rate: f64,
    pub offset: f64,
}

/// Spread of every feature of [`spike_surrogate`]. Curvatures are compared
/// across features in their own units, so all of them share one scale.
const SPIKE_SCALE: f64 = 80.0;

/// Ten fully observed features with smooth effects, one feature missing
/// completely at random at `missing_rate` whose missing rows carry an extra
/// `offset` in log-odds, then mean-imputed: the mean bin of that feature
/// ends up holding a group with a different outcome rate from its neighbours.
pub fn spike_surrogate(n_rows: usize, missing_rate: f64, offset: f64, seed_: u64) -> Result<SpikeSurrogate> {
    if !(missing_rate > 0.0 && missing_rate < 1.0) {
        return Err(Error::InvalidConfig("missing_rate must lie in (0, 1)".into()));
    }
    let mut rng = seed::rng(seed_);
    let clean: Vec<String> = (1..=10).map(|j| format!("x{j:02}")).collect();
    let feature = "pf_ratio".to_string();
    let mut xs: Vec<Vec<f64>> = (0..10).map(|_| Vec::with_capacity(n_rows)).collect();
    let mut pf = Vec::with_capacity(n_rows);
    let mut outcome = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let z: Vec<f64> = (0..11).map(|_| StandardNormal.sample(&mut rng)).collect();
        let missing = rng.random::<f64>() < missing_rate;
        let mut logit = -0.5 - 0.6 * z[10];
        for j in 0..10 {
            xs[j].push(SPIKE_SCALE * z[j]);
            logit += smooth_effect(j, z[j]);
        }
        if missing {
            logit += offset;
        }
        pf.push(if missing { f64::NAN } else { 300.0 + SPIKE_SCALE * z[10] });
        outcome.push(f64::from(rng.random::<f64>() < sigmoid(logit)));
    }
    let mut cols: Vec<Column> = clean
        .iter()
        .zip(xs)
        .map(|(name, v)| Column::continuous(name.as_str(), v))
        .collect::<Result<_>>()?;
    cols.push(Column::continuous(feature.as_str(), pf)?);
    cols.push(Column::numeric("outcome", ColumnKind::Binary, outcome)?);
    let raw = Table::new(cols)?.with_target("outcome")?;
    let table = impute_simple(&raw, &feature, SimpleMethod::Mean)?.table;
    Ok(SpikeSurrogate {
        table,
        raw,
        feature,
        clean,
        missing_rate,
        offset,
    })
}

fn smooth_effect(j: usize, z: f64) -> f64 {
    match j % 5 {
        0 => 0.5 * z,
        1 => 0.6 * z.sin(),
        2 => 0.4 * z.tanh(),
        3 => -0.4 * z,
        _ => 0.15 * (z * z - 1.0),
    }
}

/// A surrogate where one feature goes missing mostly when its value is
/// healthy, so the missing group's true values sit at the healthy end.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumedNormal {
    /// Missing cells of `feature` are `NaN`.
    pub table: Table,
    pub feature: String,
    /// True values of `feature`, observed or not.
    pub truth: Vec<f64>,
    pub mask: Vec<bool>,
}

/// The missing-assumed-normal surrogate: a low `pf_ratio` is dangerous, a
/// high one is normal and often not measured. Four weakly correlated
/// predictors carry little information about it, so imputers pull the
/// missing cells towards the (sicker) observed average.
pub fn assumed_normal_surrogate(n_rows: usize, seed_: u64) -> Result<AssumedNormal> {
    let mut rng = seed::rng(seed_);
    let loadings = [0.9, 0.3, 0.3, 0.25, 0.2];
    let names = ["pf_ratio", "heart_rate", "resp_rate", "lactate", "age"];
    let mut cols = vec![Vec::with_capacity(n_rows); names.len()];
    let mut truth = Vec::with_capacity(n_rows);
    let mut mask = Vec::with_capacity(n_rows);
    let mut outcome = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let z = latent(&mut rng, &loadings);
        let pf = 300.0 + 90.0 * z[0];
        truth.push(pf);
        let missing = rng.random::<f64>() < sigmoid(3.0 * (z[0] - 0.5));
        mask.push(missing);
        cols[0].push(if missing { f64::NAN } else { pf });
        cols[1].push(85.0 - 8.0 * z[1]);
        cols[2].push(18.0 - 3.0 * z[2]);
        cols[3].push((0.5 - 0.4 * z[3]).exp());
        cols[4].push(65.0 + 12.0 * z[4]);
        let logit = -1.0 - 1.5 * z[0] - 0.3 * z[1] - 0.3 * z[4];
        outcome.push(f64::from(rng.random::<f64>() < sigmoid(logit)));
    }
    let mut columns: Vec<Column> = names
        .iter()
        .zip(cols)
        .map(|(name, v)| Column::continuous(*name, v))
        .collect::<Result<_>>()?;
    columns.push(Column::numeric("outcome", ColumnKind::Binary, outcome)?);
    Ok(AssumedNormal {
        table: Table::new(columns)?.with_target("outcome")?,
        feature: "pf_ratio".into(),
        truth,
        mask,
    })
}

/// The base surrogate with chained missingness: `bilirubin` goes missing
/// mostly in low-severity rows, and `sodium` is missing exactly when
/// `bilirubin` is (the two come from one lab panel).
pub fn chained_surrogate(config: &SurrogateConfig, bilirubin_rate: f64) -> Result<Table> {
    if !(bilirubin_rate > 0.0 && bilirubin_rate < 1.0) {
        return Err(Error::InvalidConfig("bilirubin_rate must lie in (0, 1)".into()));
    }
    let base = surrogate_table(config)?;
    let mut rng = seed::rng_for(config.seed, 1);
    let bili = base.column("bilirubin")?;
    let mask: Vec<bool> = bili
        .values()
        .iter()
        .map(|&v| {
            // less severe rows (low bilirubin) are tested less often
            let shift = -(v.ln() - 0.3) / 0.8;
            rng.random::<f64>() < sigmoid(shift + (bilirubin_rate / (1.0 - bilirubin_rate)).ln())
        })
        .collect();
    let mut out = base;
    for name in ["bilirubin", "sodium"] {
        let col = out.column(name)?;
        let values = col
            .values()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { f64::NAN } else { v })
            .collect();
        out = out.replace_column(Column::continuous(name, values)?)?;
    }
    Ok(out)
}
