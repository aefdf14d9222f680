use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use missinglens::edit::{apply_edit, apply_edit_with_counts, diff_models, EditScript};
use missinglens::gam::{
    fit_gam, load_model, model_to_json, to_indicator_form, variable_importance, GamModel, IndicatorTerm, ValueBins,
};
use missinglens::impute::{audit_imputation, impute, ForestImputerConfig, ImputerConfig, Verdict};
use missinglens::missingness::{
    fit_missingness_model, littles_test, wald_mcar_test, LittleReport, MissingnessConfig, WaldReport,
};
use missinglens::synth::{
    assumed_normal_surrogate, chained_surrogate, mcar_bench_base, run_mcar_benchmark, run_missingness_benchmark,
    spike_surrogate, surrogate_table, McarBenchConfig, MissingnessBenchConfig, SurrogateConfig, MCAR_BENCH_ROWS,
};
use missinglens::table::{column_stats, load_csv, save_csv, ColumnKind, CsvOptions, Table};
use missinglens::Error;

use crate::args::*;
use crate::svg::{render_shape, Overlay};

/// How a command failed, mapped onto the exit code in `main`.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(Error::Json(e))
    }
}

pub type CmdResult = Result<Outcome, Failure>;

/// What a successful command has to say.
pub struct Outcome {
    pub summary: String,
    /// The audit found at least one harmful spike.
    pub harmful: bool,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { summary, harmful: false }
    }
}

/// Echo of the run written next to every output, so the run can be
/// repeated. Output paths are left out: they are where the echo lives.
#[derive(Serialize)]
struct RunConfig<'a, A: Serialize, R: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    args: &'a A,
    resolved: R,
}

pub struct Ctx {
    pub seed: u64,
    pub out: PathBuf,
}

impl Ctx {
    fn prepare(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        write_text(&self.path(name), &to_json(value)?)
    }

    fn echo<A: Serialize, R: Serialize>(&self, command: &str, args: &A, resolved: R) -> Result<(), Failure> {
        self.write_json(
            "run_config.json",
            &RunConfig {
                command,
                version: env!("CARGO_PKG_VERSION"),
                seed: self.seed,
                args,
                resolved,
            },
        )
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// A file name for a feature: anything outside `[A-Za-z0-9_-]` becomes `_`.
fn file_stem(feature: &str) -> String {
    feature
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_options(categorical: &[String], na: &[String]) -> CsvOptions {
    CsvOptions {
        schema: categorical.iter().map(|c| (c.clone(), ColumnKind::Categorical)).collect(),
        missing_tokens: std::iter::once(String::new()).chain(na.iter().cloned()).collect(),
        ..CsvOptions::default()
    }
}

fn load_data(d: &DataArgs) -> Result<Table, Failure> {
    Ok(load_csv(&d.data, &csv_options(&d.categorical, &d.na))?)
}

fn with_target_if_present(table: Table, target: &str) -> Result<Table, Failure> {
    if table.column(target).is_ok() {
        Ok(table.with_target(target)?)
    } else {
        Ok(table)
    }
}

fn shape_svgs(ctx: &Ctx, dir: &str, model: &GamModel, overlay: impl Fn(&str) -> Overlay) -> Result<(), Failure> {
    for shape in &model.shapes {
        let svg = render_shape(shape, &shape.feature, &overlay(&shape.feature));
        write_text(&ctx.path(&format!("{dir}/{}.svg", file_stem(&shape.feature))), &svg)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ShapeExport {
    feature: String,
    kind: &'static str,
    terms: Vec<IndicatorTerm>,
}

pub fn train(ctx: &Ctx, args: &TrainArgs) -> CmdResult {
    let gam = args.gam.resolve(ctx.seed);
    let table = load_data(&args.data)?.with_target(&args.target)?;
    let model = fit_gam(&table, &args.target, &gam)?;
    ctx.prepare()?;
    ctx.echo("train", args, &gam)?;
    write_text(&ctx.path("model.json"), &(model_to_json(&model)? + "\n"))?;

    let shapes = model
        .shapes
        .iter()
        .map(|s| {
            Ok(ShapeExport {
                feature: s.feature.clone(),
                kind: match s.layout.values {
                    ValueBins::Continuous { .. } => "continuous",
                    ValueBins::Categorical { .. } => "categorical",
                },
                terms: to_indicator_form(&model, &s.feature)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    ctx.write_json("shapes.json", &serde_json::json!({ "intercept": model.intercept, "shapes": shapes }))?;
    shape_svgs(ctx, "shapes", &model, |_| Overlay::default())?;

    let importance = variable_importance(&model);
    ctx.write_json("importance.json", &importance)?;
    let mut s = format!(
        "trained on {} rows, {} features, link {:?}, intercept {:.4}\n\n{:<24} {:>12}\n",
        model.n_train,
        model.shapes.len(),
        model.link,
        model.intercept,
        "feature",
        "importance"
    );
    for (f, v) in &importance {
        let _ = writeln!(s, "{f:<24} {v:>12.4}");
    }
    write_text(&ctx.path("importance.txt"), &s)?;
    Ok(Outcome::ok(s))
}

#[derive(Serialize)]
#[serde(tag = "test", rename_all = "snake_case")]
enum DiagnoseReport {
    Mcar { reports: Vec<WaldReport> },
    Little(LittleReport),
    Missingness {
        feature: String,
        auc: f64,
        accuracy: f64,
        n_train: usize,
        n_test: usize,
        top_predictors: Vec<(String, f64)>,
    },
}

pub fn diagnose(ctx: &Ctx, args: &DiagnoseArgs) -> CmdResult {
    let table = load_data(&args.data)?;
    let mut summary = String::new();
    let (report, resolved) = if let Some(features) = &args.mcar {
        let Some(path) = &args.model else {
            return Err(Failure::Usage("--mcar needs --model".into()));
        };
        let model = load_model(path)?;
        let table = table.with_target(&model.target)?;
        let features: Vec<String> = if features.is_empty() {
            model
                .shapes
                .iter()
                .filter(|s| s.layout.missing_index().is_some())
                .map(|s| s.feature.clone())
                .collect()
        } else {
            features.clone()
        };
        if features.is_empty() {
            return Err(Error::NothingToTest("no feature of the model has a missing bin".into()).into());
        }
        let reports = features
            .iter()
            .map(|f| wald_mcar_test(&model, &table, f, args.alpha))
            .collect::<Result<Vec<_>, _>>()?;
        let _ = writeln!(
            summary,
            "{:<24} {:>10} {:>10} {:>8} {:>10}  verdict",
            "feature", "theta", "se", "z", "p"
        );
        for r in &reports {
            let _ = writeln!(
                summary,
                "{:<24} {:>10.4} {:>10.4} {:>8.3} {:>10.4}  {}",
                r.feature,
                r.theta_hat,
                r.se,
                r.z,
                r.p_value,
                if r.reject_mcar { "not MCAR" } else { "consistent with MCAR" }
            );
        }
        (DiagnoseReport::Mcar { reports }, serde_json::json!({ "alpha": args.alpha }))
    } else if let Some(feature) = &args.predict_missingness {
        let target = match (&args.model, &args.target) {
            (Some(path), _) => Some(load_model(path)?.target),
            (None, t) => t.clone(),
        };
        let table = match &target {
            Some(t) => table.with_target(t)?,
            None => table,
        };
        let config = MissingnessConfig {
            gam: args.gam.resolve(ctx.seed),
            test_fraction: args.test_fraction,
            seed: ctx.seed,
            encodings: Vec::new(),
        };
        let r = fit_missingness_model(&table, feature, args.include_label, &config)?;
        let _ = writeln!(
            summary,
            "missingness of {feature}: test AUC {:.4}, accuracy {:.4} ({} train / {} test rows)",
            r.auc, r.accuracy, r.n_train, r.n_test
        );
        let _ = writeln!(summary, "top predictors:");
        for (name, v) in r.top_predictors.iter().take(3) {
            let _ = writeln!(summary, "  {name:<24} {v:>10.4}");
        }
        (
            DiagnoseReport::Missingness {
                feature: feature.clone(),
                auc: r.auc,
                accuracy: r.accuracy,
                n_train: r.n_train,
                n_test: r.n_test,
                top_predictors: r.top_predictors.clone(),
            },
            serde_json::to_value(&config)?,
        )
    } else {
        let table = match &args.target {
            Some(t) => table.with_target(t)?,
            None => table,
        };
        let r = littles_test(&table)?;
        let _ = writeln!(
            summary,
            "Little's test: chi2 {:.4}, df {}, p {:.4}, {} patterns{}",
            r.chi2,
            r.df,
            r.p_value,
            r.n_patterns,
            if r.nothing_to_test { " (no missing cells)" } else { "" }
        );
        let _ = writeln!(
            summary,
            "{}",
            if r.rejects(args.alpha) { "not MCAR" } else { "consistent with MCAR" }
        );
        (DiagnoseReport::Little(r), serde_json::json!({ "alpha": args.alpha }))
    };
    ctx.prepare()?;
    ctx.echo("diagnose", args, resolved)?;
    ctx.write_json("report.json", &report)?;
    write_text(&ctx.path("summary.txt"), &summary)?;
    Ok(Outcome::ok(summary))
}

pub fn impute_cmd(ctx: &Ctx, args: &ImputeArgs) -> CmdResult {
    let table = load_data(&args.data)?;
    let table = match &args.target {
        Some(t) => table.with_target(t)?,
        None => table,
    };
    let config = match args.method {
        MethodArg::Mean => ImputerConfig::Mean,
        MethodArg::Median => ImputerConfig::Median,
        MethodArg::Constant => match args.value {
            Some(value) => ImputerConfig::Constant { value },
            None => return Err(Failure::Usage("--method constant needs --value".into())),
        },
        MethodArg::Knn => ImputerConfig::Knn { k: args.k },
        MethodArg::Forest => ImputerConfig::IterativeForest(ForestImputerConfig {
            n_trees: args.trees,
            max_iter: args.max_iter,
            mtry: None,
            seed: ctx.seed,
        }),
    };
    let imputed = impute(&table, &config)?;
    ctx.prepare()?;
    ctx.echo("impute", args, &config)?;
    save_csv(&imputed.table, ctx.path("imputed.csv"), b',')?;
    ctx.write_json("provenance.json", &imputed.provenance)?;
    let mut per_column: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &imputed.provenance {
        *per_column.entry(p.column.as_str()).or_default() += 1;
    }
    let mut s = format!("imputed {} cells\n", imputed.provenance.len());
    for (c, n) in per_column {
        let _ = writeln!(s, "  {c:<24} {n:>8}");
    }
    Ok(Outcome::ok(s))
}

pub fn audit(ctx: &Ctx, args: &AuditArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let table = with_target_if_present(load_data(&args.data)?, &model.target)?;
    let report = audit_imputation(&model, &table, args.statistic.into(), args.contamination, ctx.seed)?;
    ctx.prepare()?;
    ctx.echo("audit", args, serde_json::json!({ "statistic": args.statistic, "contamination": args.contamination }))?;
    ctx.write_json("audit.json", &report)?;

    let mut rules = BTreeMap::new();
    for a in &report.audits {
        if a.verdict != Verdict::NotApplicable {
            let st = column_stats(&table, &a.feature)?;
            rules.insert(
                a.feature.clone(),
                match args.statistic {
                    StatisticArg::Mean => st.mean,
                    StatisticArg::Median => st.median,
                },
            );
        }
    }
    shape_svgs(ctx, "audit", &model, |f| {
        let a = report.audits.iter().find(|a| a.feature == f);
        Overlay {
            flagged: a.map(|a| a.flagged_bins.clone()).unwrap_or_default(),
            rule: rules.get(f).copied().flatten(),
        }
    })?;

    let mut s = format!("{:<24} {:>8}  verdict\n", "feature", "flagged");
    for a in &report.audits {
        let verdict = match a.verdict {
            Verdict::Harmful => "HARMFUL",
            Verdict::Harmless => "harmless",
            Verdict::NotApplicable => "not applicable",
        };
        let _ = writeln!(s, "{:<24} {:>8}  {verdict}", a.feature, a.flagged_bins.len());
    }
    let harmful = report.verdict == Verdict::Harmful;
    Ok(Outcome { summary: s, harmful })
}

pub fn edit(ctx: &Ctx, args: &EditArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let script = EditScript::from_json(&fs::read_to_string(&args.script)?)?;
    let edited = match &args.data {
        Some(path) => {
            let table = load_csv(path, &csv_options(&args.categorical, &["NA".into(), "NaN".into()]))?;
            let table = with_target_if_present(table, &model.target)?;
            apply_edit_with_counts(&model, &script, &table)?
        }
        None => apply_edit(&model, &script)?,
    };
    let diff = diff_models(&model, &edited)?;
    ctx.prepare()?;
    ctx.echo("edit", args, &script)?;
    write_text(&ctx.path("model.json"), &(model_to_json(&edited)? + "\n"))?;
    ctx.write_json("diff.json", &diff)?;
    let mut s = String::new();
    if let Some((a, b)) = diff.intercept {
        let _ = writeln!(s, "intercept {a:.6} -> {b:.6}");
    }
    for f in &diff.features {
        let _ = writeln!(s, "{}: {} bins changed", f.feature, f.bins.len());
    }
    if diff.is_empty() {
        s.push_str("no change\n");
    }
    Ok(Outcome::ok(s))
}

pub fn simulate(ctx: &Ctx, args: &SimulateArgs) -> CmdResult {
    let reps = args.reps.map(|r| r as usize);
    let (json, text) = if args.table1 {
        let mut c = McarBenchConfig {
            seed: ctx.seed,
            alpha: args.alpha,
            ..Default::default()
        };
        if let Some(r) = reps {
            c.n_reps = r;
        }
        if !args.pm.is_empty() {
            c.p_m = args.pm.clone();
        }
        if !args.mechanism.is_empty() {
            c.mechanisms = args.mechanism.iter().map(|&m| m.into()).collect();
        }
        let base = match args.rows {
            None | Some(MCAR_BENCH_ROWS) => mcar_bench_base(ctx.seed)?,
            Some(n) => surrogate_table(&SurrogateConfig {
                n_rows: n,
                seed: ctx.seed,
                ..Default::default()
            })?,
        };
        let r = run_mcar_benchmark(&base, &c)?;
        (to_json(&r)?, r.to_text())
    } else {
        let mut c = MissingnessBenchConfig {
            seed: ctx.seed,
            ..Default::default()
        };
        if let Some(r) = reps {
            c.n_reps = r;
        }
        if !args.pm.is_empty() {
            c.p_m = args.pm.clone();
        }
        if !args.mechanism.is_empty() {
            c.mechanisms = args.mechanism.iter().map(|&m| m.into()).collect();
        }
        if !args.score_model.is_empty() {
            c.score_models = args.score_model.iter().map(|&m| m.into()).collect();
        }
        let base = surrogate_table(&SurrogateConfig {
            n_rows: args.rows.unwrap_or(SurrogateConfig::default().n_rows),
            seed: ctx.seed,
            ..Default::default()
        })?;
        let r = run_missingness_benchmark(&base, &c)?;
        (to_json(&r)?, r.to_text())
    };
    ctx.prepare()?;
    // the resolved benchmark config is part of results.json
    ctx.echo("simulate", args, ())?;
    write_text(&ctx.path("results.json"), &json)?;
    write_text(&ctx.path("table.txt"), &text)?;
    Ok(Outcome::ok(text))
}

pub fn surrogate_gen(ctx: &Ctx, args: &SurrogateArgs) -> CmdResult {
    let base_config = SurrogateConfig {
        n_rows: args.rows,
        seed: ctx.seed,
        age_effect: args.age_effect.unwrap_or(SurrogateConfig::default().age_effect),
    };
    let (table, note) = match args.kind {
        SurrogateKind::Base => (surrogate_table(&base_config)?, String::new()),
        SurrogateKind::Chained => (chained_surrogate(&base_config, args.missing_rate)?, String::new()),
        SurrogateKind::Spike => {
            let s = spike_surrogate(args.rows, args.missing_rate, args.offset, ctx.seed)?;
            (s.table, format!("mean-imputed feature: {}\n", s.feature))
        }
        SurrogateKind::AssumedNormal => {
            let a = assumed_normal_surrogate(args.rows, ctx.seed)?;
            (a.table, format!("feature missing when healthy: {}\n", a.feature))
        }
    };
    ctx.prepare()?;
    ctx.echo("surrogate-gen", args, &base_config)?;
    save_csv(&table, ctx.path("surrogate.csv"), b',')?;
    Ok(Outcome::ok(format!(
        "{} rows x {} columns{}\n{note}",
        table.n_rows(),
        table.n_cols(),
        table.target().map(|t| format!(", target `{}`", t.name())).unwrap_or_default()
    )))
}
