use missinglens::edit::{apply_edit, apply_edit_with_counts, diff_models, Edit, EditAction, EditScript};
use missinglens::gam::{fit_gam, BinInterval, GamConfig, GamModel, LinkChoice};
use missinglens::synth::{surrogate_table, SurrogateConfig};
use missinglens::table::Table;
use proptest::prelude::*;
use std::sync::OnceLock;

fn fitted() -> &'static (GamModel, Table) {
    static FIT: OnceLock<(GamModel, Table)> = OnceLock::new();
    FIT.get_or_init(|| {
        let t = surrogate_table(&SurrogateConfig {
            n_rows: 2000,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let config = GamConfig {
            link: LinkChoice::Logistic,
            ..GamConfig::fast()
        };
        (fit_gam(&t, "outcome", &config).unwrap(), t)
    })
}

fn script(edits: Vec<Edit>, recenter: bool) -> EditScript {
    EditScript {
        edits,
        recenter,
        ..Default::default()
    }
}

fn flatten_heart_rate() -> Edit {
    Edit {
        feature: "heart_rate".into(),
        region: [38.0, 125.0],
        action: EditAction::FlattenToBinOf(80.0),
    }
}

fn scores(model: &GamModel, table: &Table) -> Vec<f64> {
    model.predict_table(table).unwrap().iter().map(|p| p.score).collect()
}

#[test]
fn flatten_leaves_rows_outside_the_region_bit_identical() {
    let (model, t) = fitted();
    let edited = apply_edit(model, &script(vec![flatten_heart_rate()], false)).unwrap();
    let before = scores(model, t);
    let after = scores(&edited, t);
    let hr = t.column("heart_rate").unwrap().values();
    let reference = model.shape("heart_rate").unwrap().score_of(80.0).unwrap();
    let mut outside = 0;
    for i in 0..hr.len() {
        if hr[i] < 38.0 || hr[i] > 125.0 {
            outside += 1;
            assert_eq!(before[i].to_bits(), after[i].to_bits(), "row {i}");
        }
    }
    assert!(outside > 0);
    let shape = edited.shape("heart_rate").unwrap();
    for x in [38.0, 60.0, 80.0, 100.0, 125.0] {
        assert_eq!(shape.score_of(x).unwrap(), reference);
    }
}

#[test]
fn flatten_twice_is_idempotent() {
    let (model, _) = fitted();
    let s = script(vec![flatten_heart_rate()], false);
    let once = apply_edit(model, &s).unwrap();
    let mut twice = apply_edit(&once, &s).unwrap();
    assert!(diff_models(&once, &twice).unwrap().is_empty());
    twice.history.pop();
    let mut once_plain = once.clone();
    once_plain.history.clear();
    twice.history.clear();
    assert_eq!(once_plain, twice);
}

#[test]
fn recenter_keeps_every_prediction() {
    let (model, t) = fitted();
    let edited = apply_edit(model, &script(vec![flatten_heart_rate()], true)).unwrap();
    let flat = apply_edit(model, &script(vec![flatten_heart_rate()], false)).unwrap();
    let a = scores(&flat, t);
    let b = scores(&edited, t);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&a) - mean(&b)).abs() <= 1e-8);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-8);
    }
    let shape = edited.shape("heart_rate").unwrap();
    assert!(shape.weighted_mean().abs() <= 1e-8);
    assert!(edited.history[0].intercept_change != 0.0);
}

#[test]
fn shift_and_unshift_restore_the_model() {
    let (model, _) = fitted();
    let shift = |d: f64| {
        script(
            vec![Edit {
                feature: "age".into(),
                region: [50.0, 70.0],
                action: EditAction::ShiftBy(d),
            }],
            false,
        )
    };
    let there = apply_edit(model, &shift(0.25)).unwrap();
    let back = apply_edit(&there, &shift(-0.25)).unwrap();
    let mut restored = back.clone();
    restored.history.clear();
    let mut original = model.clone();
    original.history.clear();
    // scores differ from the originals by at most one rounding each way
    assert!(diff_models(&original, &restored).unwrap().is_empty());
    assert_eq!(restored.shape("age").unwrap().layout.edges(), original.shape("age").unwrap().layout.edges());
    assert_eq!(restored.shape("age").unwrap().layout.counts, original.shape("age").unwrap().layout.counts);
}

#[test]
fn diff_lists_exactly_the_region() {
    let (model, _) = fitted();
    let edited = apply_edit(model, &script(vec![flatten_heart_rate()], false)).unwrap();
    let diff = diff_models(model, &edited).unwrap();
    assert!(diff.intercept.is_none());
    assert_eq!(diff.features.len(), 1);
    assert_eq!(diff.features[0].feature, "heart_rate");
    for change in &diff.features[0].bins {
        let BinInterval::Range { lo, hi, .. } = change.interval else {
            panic!("continuous feature")
        };
        assert!(hi >= 38.0 && lo <= 125.0, "[{lo}, {hi}]");
    }
    assert_eq!(edited.history[0].bins_changed, diff.features[0].bins.len());
}

#[test]
fn recenter_shows_up_as_an_intercept_change() {
    let (model, _) = fitted();
    let edited = apply_edit(model, &script(vec![flatten_heart_rate()], true)).unwrap();
    let diff = diff_models(model, &edited).unwrap();
    let (before, after) = diff.intercept.expect("intercept moved");
    assert!((after - before - edited.history[0].intercept_change).abs() < 1e-12);
}

#[test]
fn recounting_on_a_table_matches_the_data() {
    let (model, t) = fitted();
    let edited = apply_edit_with_counts(model, &script(vec![flatten_heart_rate()], false), t).unwrap();
    let shape = edited.shape("heart_rate").unwrap();
    let total: f64 = shape.layout.counts.iter().sum();
    assert_eq!(total, t.n_rows() as f64);
}

#[test]
fn bad_regions_are_rejected() {
    let (model, _) = fitted();
    let bad = |region: [f64; 2]| {
        script(
            vec![Edit {
                feature: "heart_rate".into(),
                region,
                action: EditAction::FlattenTo(0.0),
            }],
            false,
        )
    };
    assert!(apply_edit(model, &bad([10.0, 5.0])).is_err());
    assert!(apply_edit(model, &bad([1e6, 2e6])).is_err());
    assert!(apply_edit(model, &bad([f64::NAN, 1.0])).is_err());
}

#[test]
fn script_round_trips_through_json() {
    let s = script(vec![flatten_heart_rate()], true);
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(EditScript::from_json(&text).unwrap(), s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn edits_are_local(lo in 40f64..110.0, width in 0.5f64..30.0, value in -2f64..2.0) {
        let (model, t) = fitted();
        let hi = lo + width;
        let edit = Edit { feature: "heart_rate".into(), region: [lo, hi], action: EditAction::FlattenTo(value) };
        let edited = apply_edit(model, &script(vec![edit], false)).unwrap();
        let before = scores(model, t);
        let after = scores(&edited, t);
        let hr = t.column("heart_rate").unwrap().values();
        for i in 0..hr.len() {
            if hr[i] < lo || hr[i] > hi {
                prop_assert_eq!(before[i].to_bits(), after[i].to_bits());
            }
        }
        prop_assert_eq!(edited.shape("heart_rate").unwrap().score_of(lo).unwrap(), value);
        prop_assert_eq!(edited.shape("heart_rate").unwrap().score_of(hi).unwrap(), value);
    }
}
