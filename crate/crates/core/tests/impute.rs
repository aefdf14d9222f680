use missinglens::gam::{fit_gam, BinLayout, GamConfig, GamModel, Link, ShapeFunction, ValueBins};
use missinglens::impute::{
    audit_imputation, impute, impute_iterative_forest, impute_knn, impute_simple, second_order_diff,
    AuditStatistic, ForestImputerConfig, ImputerConfig, SimpleMethod, Verdict,
};
use missinglens::seed;
use missinglens::table::{Column, Table};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const NAN: f64 = f64::NAN;

fn table(cols: Vec<(&str, Vec<f64>)>) -> Table {
    Table::new(cols.into_iter().map(|(n, v)| Column::continuous(n, v).unwrap()).collect()).unwrap()
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap().values().to_vec()
}

#[test]
fn mean_fill_of_small_column() {
    let t = table(vec![("x", vec![1.0, NAN, 3.0])]);
    let out = impute_simple(&t, "x", SimpleMethod::Mean).unwrap();
    assert_eq!(col(&out.table, "x"), vec![1.0, 2.0, 3.0]);
    assert_eq!(out.provenance.len(), 1);
    assert_eq!(out.provenance[0].row, 1);
    assert_eq!(out.provenance[0].method, "mean");
}

#[test]
fn median_ignores_outlier() {
    let t = table(vec![("x", vec![1.0, NAN, 3.0, 100.0])]);
    let out = impute_simple(&t, "x", SimpleMethod::Median).unwrap();
    assert_eq!(col(&out.table, "x")[1], 3.0);
}

#[test]
fn knn_copies_a_duplicate_row() {
    let t = table(vec![
        ("a", vec![0.0, 5.0, 0.0, 9.0]),
        ("b", vec![1.0, -3.0, 1.0, 7.0]),
        ("x", vec![NAN, 2.0, 42.0, 8.0]),
    ]);
    let out = impute_knn(&t, 1).unwrap();
    assert_eq!(col(&out.table, "x")[0], 42.0);
}

#[test]
fn knn_with_every_donor_is_the_observed_mean() {
    let t = table(vec![
        ("a", vec![0.0, 1.0, 2.0, 3.0, 4.0]),
        ("x", vec![NAN, 2.0, 4.0, 6.0, 11.0]),
    ]);
    let out = impute_knn(&t, 4).unwrap();
    assert_eq!(col(&out.table, "x")[0], 23.0 / 4.0);
}

#[test]
fn knn_rejects_k_beyond_rows() {
    let t = table(vec![("a", vec![0.0, 1.0]), ("x", vec![NAN, 1.0])]);
    assert!(impute_knn(&t, 2).is_err());
    assert!(impute_knn(&t, 0).is_err());
}

#[test]
fn knn_fill_stays_in_its_cluster() {
    let mut rng = seed::rng(4);
    let n = 200;
    let mut a = Vec::new();
    let mut x = Vec::new();
    for i in 0..n {
        let cluster = if i % 2 == 0 { -10.0 } else { 10.0 };
        let e: f64 = StandardNormal.sample(&mut rng);
        a.push(cluster + 0.1 * e);
        x.push(if i < 10 { NAN } else { cluster + rng.random::<f64>() - 0.5 });
    }
    let out = impute_knn(&table(vec![("a", a.clone()), ("x", x)]), 5).unwrap();
    let filled = col(&out.table, "x");
    for i in 0..10 {
        let cluster = if i % 2 == 0 { -10.0 } else { 10.0 };
        assert!((filled[i] - cluster).abs() <= 0.5, "row {i}: {}", filled[i]);
    }
}

#[test]
fn forest_without_missing_cells_is_identity() {
    let t = table(vec![("a", vec![1.0, 2.0, 3.0]), ("b", vec![3.0, 1.0, 2.0])]);
    let out = impute_iterative_forest(&t, &ForestImputerConfig::default()).unwrap();
    assert_eq!(out.table, t);
    assert!(out.provenance.is_empty());
}

#[test]
fn forest_beats_the_mean_on_a_linear_relation() {
    let mut rng = seed::rng(11);
    let n = 600;
    let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let truth: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.2).collect();
    let x: Vec<f64> = truth.iter().zip(&mask).map(|(&v, &m)| if m { NAN } else { v }).collect();
    let t = table(vec![("a", a), ("b", b), ("x", x)]);
    let config = ForestImputerConfig {
        n_trees: 30,
        max_iter: 4,
        ..Default::default()
    };
    let forest = col(&impute_iterative_forest(&t, &config).unwrap().table, "x");
    let mean = col(&impute_simple(&t, "x", SimpleMethod::Mean).unwrap().table, "x");
    let rmse = |f: &[f64]| {
        let (s, c) = (0..n)
            .filter(|&i| mask[i])
            .fold((0.0, 0.0), |(s, c), i| (s + (f[i] - truth[i]).powi(2), c + 1.0));
        (s / c as f64).sqrt()
    };
    assert!(rmse(&forest) < 0.5 * rmse(&mean), "{} vs {}", rmse(&forest), rmse(&mean));
}

#[test]
fn dispatcher_fills_every_column() {
    let t = table(vec![("a", vec![1.0, NAN, 3.0]), ("b", vec![NAN, 1.0, 2.0])]);
    let out = impute(&t, &ImputerConfig::Mean).unwrap();
    assert_eq!(col(&out.table, "a")[1], 2.0);
    assert_eq!(col(&out.table, "b")[0], 1.5);
}

proptest! {
    #[test]
    fn mean_fill_keeps_the_mean(values in prop::collection::vec(-1e3f64..1e3, 2..40), holes in prop::collection::vec(any::<bool>(), 40)) {
        let mut cells = values.clone();
        for (i, c) in cells.iter_mut().enumerate().skip(1) {
            if holes[i] { *c = NAN; }
        }
        let t = table(vec![("x", cells.clone())]);
        let obs: Vec<f64> = cells.iter().copied().filter(|v| !v.is_nan()).collect();
        let before = obs.iter().sum::<f64>() / obs.len() as f64;
        let filled = col(&impute_simple(&t, "x", SimpleMethod::Mean).unwrap().table, "x");
        let after = filled.iter().sum::<f64>() / filled.len() as f64;
        prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn knn_never_touches_observed_cells(rows in prop::collection::vec((-5f64..5.0, -5f64..5.0, any::<bool>()), 3..30), k in 1usize..3) {
        let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut x: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for (i, r) in rows.iter().enumerate().skip(1) {
            if r.2 { x[i] = NAN; }
        }
        let t = table(vec![("a", a), ("x", x.clone())]);
        let out = impute_knn(&t, k).unwrap();
        let filled = col(&out.table, "x");
        for i in 0..x.len() {
            if x[i].is_nan() {
                prop_assert!(filled[i].is_finite());
            } else {
                prop_assert_eq!(filled[i].to_bits(), x[i].to_bits());
            }
        }
    }
}

fn shape(name: &str, edges: Vec<f64>, scores: Vec<f64>) -> ShapeFunction {
    let counts = vec![1.0; scores.len()];
    ShapeFunction {
        feature: name.into(),
        layout: BinLayout {
            values: ValueBins::Continuous { edges },
            missing: None,
            counts,
        },
        scores,
        edit_cuts: vec![],
    }
}

#[test]
fn curvature_of_three_bins_by_hand() {
    // widths 1, 2, 4; f = 0, 3, 1
    // right slope (1-3)/3, left slope (3-0)/1.5, denominator 2 + 2 + 0.5
    let s = shape("x", vec![0.0, 1.0, 3.0, 7.0], vec![0.0, 3.0, 1.0]);
    let d = second_order_diff(&s).unwrap();
    let expected = (-2.0 / 3.0 - 2.0) / 4.5;
    assert_eq!(d.len(), 1);
    assert!((d[0] - expected).abs() <= 1e-12, "{} vs {expected}", d[0]);
}

#[test]
fn curvature_of_uneven_four_bins_by_hand() {
    let s = shape("x", vec![0.0, 0.5, 1.0, 2.5, 3.0], vec![1.0, -1.0, 2.0, 0.5]);
    let d = second_order_diff(&s).unwrap();
    let h = [0.5, 0.5, 1.5, 0.5];
    let f = [1.0, -1.0, 2.0, 0.5];
    for k in 1..3 {
        let e = ((f[k + 1] - f[k]) / ((h[k + 1] + h[k]) / 2.0) - (f[k] - f[k - 1]) / ((h[k] + h[k - 1]) / 2.0))
            / (h[k] + h[k + 1] / 2.0 + h[k - 1] / 2.0);
        assert!((d[k - 1] - e).abs() <= 1e-12);
    }
}

#[test]
fn curvature_needs_three_bins() {
    assert!(second_order_diff(&shape("x", vec![0.0, 1.0, 2.0], vec![0.0, 1.0])).is_err());
}

fn spiky_model(spike: f64) -> (GamModel, Table) {
    // ten smooth shapes and one with a spike in the bin holding its mean
    let edges: Vec<f64> = (0..=12).map(|k| k as f64).collect();
    let mut shapes = Vec::new();
    let mut cols = Vec::new();
    for j in 0..11 {
        let name = format!("f{j}");
        let scores: Vec<f64> = (0..12)
            .map(|k| {
                let x = k as f64 + 0.5;
                // cubic: curvature grows away from the centre bin and is zero there
                let a = 1.0 + 0.1 * j as f64;
                let smooth = 0.05 * a * (x - 6.0) + 0.002 * a * (x - 6.5).powi(3);
                if j == 10 && k == 6 { smooth + spike } else { smooth }
            })
            .collect();
        shapes.push(shape(&name, edges.clone(), scores));
        // observed mean 6.5 lands in bin 6
        cols.push((name, (0..=13).map(|v| v as f64).collect::<Vec<_>>()));
    }
    let model = GamModel {
        intercept: 0.0,
        link: Link::Logistic,
        target: "y".into(),
        shapes,
        config: GamConfig::default(),
        n_train: 13,
        history: vec![],
    };
    let t = Table::new(cols.into_iter().map(|(n, v)| Column::continuous(n, v).unwrap()).collect()).unwrap();
    (model, t)
}

#[test]
fn spike_at_the_mean_is_harmful() {
    let (model, t) = spiky_model(1.0);
    let report = audit_imputation(&model, &t, AuditStatistic::Mean, 0.05, 0).unwrap();
    assert_eq!(report.audits[10].mean_bin, Some(6));
    assert_eq!(report.audits[10].verdict, Verdict::Harmful);
    assert_eq!(report.harmful(), vec!["f10"]);
    assert_eq!(report.verdict, Verdict::Harmful);
}

#[test]
fn smooth_shapes_are_harmless() {
    let (model, t) = spiky_model(0.0);
    let report = audit_imputation(&model, &t, AuditStatistic::Median, 0.05, 0).unwrap();
    assert!(report.harmful().is_empty());
}

#[test]
fn audit_is_seeded() {
    let (model, t) = spiky_model(0.3);
    let a = audit_imputation(&model, &t, AuditStatistic::Mean, 0.1, 9).unwrap();
    let b = audit_imputation(&model, &t, AuditStatistic::Mean, 0.1, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn two_bin_shapes_are_not_applicable() {
    let s = shape("x", vec![0.0, 1.0, 2.0], vec![0.0, 1.0]);
    let model = GamModel {
        intercept: 0.0,
        link: Link::Logistic,
        target: "y".into(),
        shapes: vec![s],
        config: GamConfig::default(),
        n_train: 3,
        history: vec![],
    };
    let t = table(vec![("x", vec![0.0, 1.0, 2.0])]);
    let r = audit_imputation(&model, &t, AuditStatistic::Mean, 0.1, 0).unwrap();
    assert_eq!(r.verdict, Verdict::NotApplicable);
    assert_eq!(r.threshold, None);
}

#[test]
fn contamination_outside_unit_interval_is_rejected() {
    let (model, t) = spiky_model(0.0);
    assert!(audit_imputation(&model, &t, AuditStatistic::Mean, 0.0, 0).is_err());
    assert!(audit_imputation(&model, &t, AuditStatistic::Mean, 1.5, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn more_contamination_flags_a_superset(c1 in 0.01f64..0.5, extra in 0.0f64..0.5, spike in -2f64..2.0) {
        let (model, t) = spiky_model(spike);
        let lo = audit_imputation(&model, &t, AuditStatistic::Mean, c1, 3).unwrap();
        let hi = audit_imputation(&model, &t, AuditStatistic::Mean, (c1 + extra).min(1.0), 3).unwrap();
        for (a, b) in lo.audits.iter().zip(&hi.audits) {
            for bin in &a.flagged_bins {
                prop_assert!(b.flagged_bins.contains(bin));
            }
        }
    }
}

#[test]
fn mean_imputed_fills_land_in_the_mean_bin() {
    // fit on a mean-imputed column: the audit's mean bin is the bin holding the fills
    let mut rng = seed::rng(2);
    let n = 800;
    let x: Vec<f64> = (0..n)
        .map(|i| if i % 4 == 0 { NAN } else { StandardNormal.sample(&mut rng) })
        .collect();
    let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect();
    let raw = Table::new(vec![
        Column::continuous("x", x).unwrap(),
        Column::continuous("y", y).unwrap(),
    ])
    .unwrap()
    .with_target("y")
    .unwrap();
    let filled = impute_simple(&raw, "x", SimpleMethod::Mean).unwrap();
    let fill = filled.provenance[0].value;
    let model = fit_gam(&filled.table, "y", &GamConfig::fast()).unwrap();
    let r = audit_imputation(&model, &filled.table, AuditStatistic::Mean, 0.1, 0).unwrap();
    let s = model.shape("x").unwrap();
    assert_eq!(r.audits[0].mean_bin, s.layout.bin_of(fill));
}
