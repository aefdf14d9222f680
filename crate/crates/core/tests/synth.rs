use missinglens::synth::{
    assumed_normal_surrogate, gen_missing, knn_classify, spike_surrogate, surrogate_table, MaskProtocol, Mechanism,
    ScoreModel, SurrogateConfig, SynthSpec, SURROGATE_FEATURES,
};
use missinglens::table::{Column, Table};
use proptest::prelude::*;
use std::sync::OnceLock;

fn base() -> &'static Table {
    static BASE: OnceLock<Table> = OnceLock::new();
    BASE.get_or_init(|| {
        surrogate_table(&SurrogateConfig {
            n_rows: 500,
            seed: 1,
            ..Default::default()
        })
        .unwrap()
    })
}

#[test]
fn surrogate_has_the_advertised_columns() {
    let t = base();
    assert_eq!(t.n_rows(), 500);
    assert_eq!(t.feature_names(), SURROGATE_FEATURES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    assert_eq!(t.target().unwrap().name(), "outcome");
    let y = t.target().unwrap().values();
    let rate = y.iter().sum::<f64>() / y.len() as f64;
    assert!(rate > 0.3 && rate < 0.7, "outcome rate {rate}");
}

#[test]
fn surrogate_is_seeded() {
    let config = SurrogateConfig {
        n_rows: 50,
        seed: 9,
        ..Default::default()
    };
    assert_eq!(surrogate_table(&config).unwrap(), surrogate_table(&config).unwrap());
}

#[test]
fn masks_are_deterministic() {
    for mechanism in [Mechanism::Mcar, Mechanism::Mar, Mechanism::Mnar] {
        let spec = SynthSpec::new(mechanism, 0.2, "age", 17);
        assert_eq!(gen_missing(base(), &spec).unwrap(), gen_missing(base(), &spec).unwrap());
    }
}

#[test]
fn mar_scores_ignore_the_masked_feature() {
    // replacing the masked feature's values cannot change a MAR mask
    let spec = SynthSpec::new(Mechanism::Mar, 0.3, "age", 4).with_score_model(ScoreModel::Curvilinear);
    let a = gen_missing(base(), &spec).unwrap();
    let scrambled: Vec<f64> = base().column("age").unwrap().values().iter().rev().copied().collect();
    let other = base().replace_column(Column::continuous("age", scrambled).unwrap()).unwrap();
    let b = gen_missing(&other, &spec).unwrap();
    assert_eq!(a.mask, b.mask);
}

#[test]
fn mnar_without_noise_masks_the_extreme_scores() {
    let mut spec = SynthSpec::new(Mechanism::Mnar, 0.25, "age", 5);
    spec.noise_sd = 0.0;
    spec.inputs = Some(vec!["age".into()]);
    let m = gen_missing(base(), &spec).unwrap();
    let age = base().column("age").unwrap().values();
    // one input: the score is monotone in age, so the mask is one tail of it
    let quota = (0.25 * 500.0f64).ceil() as usize;
    let mut order: Vec<usize> = (0..age.len()).collect();
    order.sort_by(|&a, &b| m.scores[a].total_cmp(&m.scores[b]));
    let expected: Vec<bool> = {
        let mut v = vec![false; age.len()];
        for &i in &order[..quota] {
            v[i] = true;
        }
        v
    };
    assert_eq!(m.mask, expected);
    let masked_ages: Vec<f64> = (0..age.len()).filter(|&i| m.mask[i]).map(|i| age[i]).collect();
    let kept_ages: Vec<f64> = (0..age.len()).filter(|&i| !m.mask[i]).map(|i| age[i]).collect();
    let (mlo, mhi) = bounds(&masked_ages);
    let (klo, khi) = bounds(&kept_ages);
    assert!(mhi <= klo || khi <= mlo);
}

fn bounds(v: &[f64]) -> (f64, f64) {
    (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

#[test]
fn threshold_protocol_masks_the_other_tail() {
    let mut spec = SynthSpec::new(Mechanism::Mar, 0.1, "age", 6);
    spec.noise_sd = 0.0;
    let low = gen_missing(base(), &spec).unwrap();
    let high = gen_missing(base(), &spec.clone().with_protocol(MaskProtocol::Threshold)).unwrap();
    let lo_max = (0..500).filter(|&i| low.mask[i]).map(|i| low.scores[i]).fold(f64::NEG_INFINITY, f64::max);
    let hi_min = (0..500).filter(|&i| high.mask[i]).map(|i| high.scores[i]).fold(f64::INFINITY, f64::min);
    assert!(lo_max < hi_min);
}

#[test]
fn bad_specs_are_rejected() {
    assert!(gen_missing(base(), &SynthSpec::new(Mechanism::Mcar, 0.0, "age", 0)).is_err());
    assert!(gen_missing(base(), &SynthSpec::new(Mechanism::Mcar, 1.0, "age", 0)).is_err());
    assert!(gen_missing(base(), &SynthSpec::new(Mechanism::Mcar, 0.1, "outcome", 0)).is_err());
    assert!(gen_missing(base(), &SynthSpec::new(Mechanism::Mcar, 0.1, "nope", 0)).is_err());
    let mut spec = SynthSpec::new(Mechanism::Mar, 0.1, "age", 0);
    spec.inputs = Some(vec!["age".into()]);
    assert!(gen_missing(base(), &spec).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn scored_masks_hit_the_quota(p_m in 0.01f64..0.9, seed in any::<u64>(), which in 0usize..3, model in 0usize..3) {
        let mechanism = [Mechanism::Mar, Mechanism::Mnar, Mechanism::Mar][which];
        let score_model = [ScoreModel::Linear, ScoreModel::Curvilinear, ScoreModel::Quadratic][model];
        let spec = SynthSpec::new(mechanism, p_m, "age", seed).with_score_model(score_model);
        let m = gen_missing(base(), &spec).unwrap();
        let quota = (p_m * 500.0).ceil() as usize;
        prop_assert_eq!(m.mask.iter().filter(|&&b| b).count(), quota);
        prop_assert_eq!(m.table.column("age").unwrap().n_missing(), quota);
        // nothing else changed
        for name in base().column_names() {
            if name != "age" {
                prop_assert_eq!(m.table.column(&name).unwrap(), base().column(&name).unwrap());
            }
        }
    }
}

#[test]
fn spike_surrogate_mean_fills_the_missing_rows() {
    let s = spike_surrogate(1000, 0.3, 1.0, 2).unwrap();
    let raw = s.raw.column(&s.feature).unwrap();
    let filled = s.table.column(&s.feature).unwrap();
    assert!(raw.n_missing() > 200 && raw.n_missing() < 400);
    assert_eq!(filled.n_missing(), 0);
    let obs = raw.observed_values();
    let m = obs.iter().sum::<f64>() / obs.len() as f64;
    for i in 0..raw.len() {
        if raw.is_missing_coded(i) {
            assert_eq!(filled.values()[i], m);
        }
    }
    assert_eq!(s.clean.len(), 10);
}

#[test]
fn assumed_normal_missing_group_is_healthier() {
    let a = assumed_normal_surrogate(3000, 1).unwrap();
    let mean_of = |keep: bool| {
        let v: Vec<f64> = (0..a.truth.len()).filter(|&i| a.mask[i] == keep).map(|i| a.truth[i]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_of(true) > mean_of(false) + 50.0);
    assert_eq!(a.table.column(&a.feature).unwrap().n_missing(), a.mask.iter().filter(|&&m| m).count());
}

#[test]
fn knn_classifier_votes_with_neighbours() {
    let train = vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0], vec![5.1]];
    let labels = vec![0.0, 0.0, 0.0, 1.0, 1.0];
    let pred = knn_classify(&train, &labels, &[vec![0.05], vec![5.05]], 1);
    assert_eq!(pred, vec![0.0, 1.0]);
}
