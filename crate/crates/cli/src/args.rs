use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use missinglens::gam::{EarlyStopping, GamConfig, LinkChoice};
use missinglens::impute::AuditStatistic;
use missinglens::synth::{Mechanism, ScoreModel};

#[derive(Parser, Debug)]
#[command(name = "missinglens", version, about = "Glass-box additive models for missing values")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, env = "MISSINGLENS_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Directory outputs are written to (created if absent).
    #[arg(long, global = true, default_value = "missinglens-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit an additive model and render its shape functions.
    Train(TrainArgs),
    /// Test missingness: missing-bin Wald test, Little's test, or a
    /// missingness model.
    Diagnose(DiagnoseArgs),
    /// Fill missing cells.
    Impute(ImputeArgs),
    /// Look for spikes a mean or median imputation left in a model.
    Audit(AuditArgs),
    /// Apply an edit script to a model.
    Edit(EditArgs),
    /// Replicated benchmarks on the surrogate data.
    Simulate(SimulateArgs),
    /// Write a surrogate data set as CSV.
    SurrogateGen(SurrogateArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Columns to read as categorical (others are inferred).
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    /// Cell values read as missing, in addition to empty cells.
    #[arg(long, value_delimiter = ',', default_values_t = ["NA".to_string(), "NaN".to_string()])]
    pub na: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkArg {
    Auto,
    Identity,
    Logistic,
}

#[derive(Args, Debug, Serialize)]
pub struct GamArgs {
    /// Start from the cheap benchmark preset instead of the full default.
    #[arg(long)]
    pub fast: bool,
    #[arg(long)]
    pub max_bins: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub bags: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Boost for exactly `max_rounds` rounds.
    #[arg(long)]
    pub no_early_stopping: bool,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_enum)]
    pub link: Option<LinkArg>,
    /// Fit each bag on all rows instead of a bootstrap sample.
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Features to model; every non-target column when absent.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
}

impl GamArgs {
    pub fn resolve(&self, seed: u64) -> GamConfig {
        let mut c = if self.fast { GamConfig::fast() } else { GamConfig::default() };
        c.seed = seed;
        if let Some(v) = self.max_bins {
            c.max_bins = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.max_rounds {
            c.max_rounds = v;
        }
        if let Some(v) = self.bags {
            c.bags = v;
        }
        if let Some(v) = self.max_depth {
            c.max_depth = v;
        }
        if let Some(v) = self.min_leaf {
            c.min_leaf = v;
        }
        if self.no_early_stopping {
            c.early_stopping = None;
        } else if let Some(p) = self.patience {
            c.early_stopping = Some(EarlyStopping {
                patience: p,
                ..c.early_stopping.unwrap_or_default()
            });
        }
        if let Some(link) = self.link {
            c.link = match link {
                LinkArg::Auto => LinkChoice::Auto,
                LinkArg::Identity => LinkChoice::Identity,
                LinkArg::Logistic => LinkChoice::Logistic,
            };
        }
        if self.no_bootstrap {
            c.bootstrap = false;
        }
        if !self.features.is_empty() {
            c.features = Some(self.features.clone());
        }
        c
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Column to predict.
    #[arg(long)]
    pub target: String,
    #[command(flatten)]
    pub gam: GamArgs,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("mode").required(true).args(["mcar", "predict_missingness", "little"])))]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained model; needed for `--mcar`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Wald test of the missing bin of each listed feature (all features
    /// with a missing bin when none are listed).
    #[arg(long, num_args = 0..)]
    pub mcar: Option<Vec<String>>,
    /// Fit a model predicting whether FEATURE is missing.
    #[arg(long, value_name = "FEATURE")]
    pub predict_missingness: Option<String>,
    /// Little's test over the continuous columns.
    #[arg(long)]
    pub little: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Label column of the data (taken from the model when one is given).
    #[arg(long)]
    pub target: Option<String>,
    /// Let the missingness model see the label column.
    #[arg(long)]
    pub include_label: bool,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[command(flatten)]
    pub gam: GamArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Mean,
    Median,
    Constant,
    Knn,
    Forest,
}

#[derive(Args, Debug, Serialize)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Neighbours for `knn`.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Fill value for `constant`.
    #[arg(long)]
    pub value: Option<f64>,
    /// Trees per forest for `forest`.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Sweeps for `forest`.
    #[arg(long, default_value_t = 10)]
    pub max_iter: usize,
    /// Label column, left untouched and unused.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticArg {
    Mean,
    Median,
}

impl From<StatisticArg> for AuditStatistic {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Mean => AuditStatistic::Mean,
            StatisticArg::Median => AuditStatistic::Median,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct AuditArgs {
    /// Model trained on the imputed data.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Which fill the imputation used.
    #[arg(long, value_enum, default_value_t = StatisticArg::Mean)]
    pub statistic: StatisticArg,
    /// Share of pooled bins flagged as outliers.
    #[arg(long, default_value_t = 0.05)]
    pub contamination: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct EditArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// JSON edit script.
    #[arg(long)]
    pub script: PathBuf,
    /// Training data, to recount bins split by an edit.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismArg {
    Mcar,
    Mar,
    Mnar,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Mcar => Mechanism::Mcar,
            MechanismArg::Mar => Mechanism::Mar,
            MechanismArg::Mnar => Mechanism::Mnar,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreModelArg {
    Linear,
    Curvilinear,
    Quadratic,
}

impl From<ScoreModelArg> for ScoreModel {
    fn from(s: ScoreModelArg) -> Self {
        match s {
            ScoreModelArg::Linear => ScoreModel::Linear,
            ScoreModelArg::Curvilinear => ScoreModel::Curvilinear,
            ScoreModelArg::Quadratic => ScoreModel::Quadratic,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("bench").required(true).args(["table1", "table3"])))]
pub struct SimulateArgs {
    /// Rejection rates of the missing-bin and Little's tests.
    #[arg(long)]
    pub table1: bool,
    /// Held-out accuracy of missingness classifiers.
    #[arg(long)]
    pub table3: bool,
    /// Replicates per cell (200 for table1, 20 for table3).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    /// Missing rates.
    #[arg(long, value_delimiter = ',')]
    pub pm: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub mechanism: Vec<MechanismArg>,
    /// Score models (table3 only).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub score_model: Vec<ScoreModelArg>,
    /// Rows of the surrogate base table.
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Complete correlated table with a binary outcome.
    Base,
    /// Mean-imputed table with a planted spike.
    Spike,
    /// A feature missing mostly when healthy.
    AssumedNormal,
    /// Two lab values missing together, mostly in low-severity rows.
    Chained,
}

#[derive(Args, Debug, Serialize)]
pub struct SurrogateArgs {
    #[arg(long, value_enum, default_value_t = SurrogateKind::Base)]
    pub kind: SurrogateKind,
    #[arg(long, default_value_t = 5000)]
    pub rows: usize,
    /// Missing rate (spike, chained).
    #[arg(long, default_value_t = 0.3)]
    pub missing_rate: f64,
    /// Log-odds carried by the missing group (spike).
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    /// Log-odds per standard deviation of age (base, chained).
    #[arg(long)]
    pub age_effect: Option<f64>,
}
