use super::*;
use crate::model::{build_network, NetworkSpec};
use proptest::prelude::*;

fn bits(s: &str) -> Vec<bool> {
    crate::model::parse_bits(s).unwrap()
}

#[test]
fn per_pattern_examples() {
    assert_eq!(error_per_pattern(&bits("10101"), &bits("10101")).unwrap(), 0.0);
    assert!((error_per_pattern(&bits("10101"), &bits("10001")).unwrap() - 0.2).abs() < 1e-12);
    assert_eq!(error_per_pattern(&bits("1010"), &bits("0101")).unwrap(), 1.0);
    assert!(matches!(
        error_per_pattern(&bits("10"), &bits("1")),
        Err(MetricsError::DimensionMismatch { expected: 2, got: 1 })
    ));
}

#[test]
fn global_examples() {
    let exact = [(bits("101"), bits("101")), (bits("011"), bits("011"))];
    assert_eq!(global_error(&exact).unwrap(), 0.0);
    assert!((global_error_of(&[0.25]) - 0.5).abs() < 1e-12);
    assert!((global_error_of(&[0.2, 0.0]) - 0.1f64.sqrt()).abs() < 1e-12);
    let pairs = [(bits("10101"), bits("10001")), (bits("11111"), bits("11111"))];
    assert!((global_error(&pairs).unwrap() - 0.1f64.sqrt()).abs() < 1e-12);
    let empty: [(Vec<bool>, Vec<bool>); 0] = [];
    assert!(matches!(global_error(&empty), Err(MetricsError::Empty)));
}

#[test]
fn quality_examples() {
    let silent = [(bits("10"), bits("00")), (bits("01"), bits("00"))];
    assert_eq!(quality_of_output(&silent, 0), 0.0);
    let half = [
        (bits("10"), bits("10")),
        (bits("01"), bits("00")),
        (bits("11"), bits("11")),
        (bits("00"), bits("11")),
    ];
    assert_eq!(quality_of_output(&half, 0), 0.5);
    assert_eq!(quality_of_output(&half, 1), 0.75);
    assert_eq!(quality_of_output(&half, 2), 1.0);
}

#[test]
fn equal_weights_fill_one_bin() {
    let h = histogram(&[0.3; 10], crate::model::LayerPair::IH, Stage::Initial, 8).unwrap();
    assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
    assert_eq!(h.total(), 10);
    assert!(histogram(&[1.0], crate::model::LayerPair::IH, Stage::Initial, 0).is_err());
}

#[test]
fn initial_histogram_is_symmetric() {
    let spec = NetworkSpec {
        n_input: 10,
        n_hidden: 1980,
        n_output: 10,
        init_seed: 1,
        ..NetworkSpec::default()
    };
    let (t, w) = build_network(&spec).unwrap();
    for pair in [crate::model::LayerPair::IH, crate::model::LayerPair::HO] {
        let h = weight_histogram(&w, &t, pair, Stage::Initial, DEFAULT_BINS).unwrap();
        assert_eq!(h.edges.len(), DEFAULT_BINS + 1);
        assert!(h.mean.abs() < 0.05, "mean {}", h.mean);
        assert!((h.std_dev - 1.0).abs() < 0.05, "std {}", h.std_dev);
        let values: Vec<f64> = t.synapse_ids(pair).map(|s| w.stored(s)).collect();
        let neg = values.iter().filter(|v| **v < 0.0).count() as f64;
        let frac = neg / values.len() as f64;
        assert!((frac - 0.5).abs() < 0.03, "negative fraction {frac}");
    }
}

#[test]
fn histogram_csv() {
    let h = histogram(&[0.0, 1.0], crate::model::LayerPair::HO, Stage::PostLearning, 2).unwrap();
    let mut out = Vec::new();
    write_histograms(&mut out, &[h]).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        format!("{HISTOGRAM_CSV_HEADER}\nHO,post-learning,0,0.5,1\nHO,post-learning,0.5,1,1\n")
    );
}

#[test]
fn statistics_helpers() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    assert!(median(&[]).is_nan());
    assert!((spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]) + 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]) - 0.9486832980505138).abs()
        < 1e-12);
    assert!(spearman(&[1.0, 2.0], &[5.0, 5.0]).is_nan());
    assert!((linear_r2(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 1.0).abs() < 1e-12);
    assert!(linear_r2(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).is_nan());
    let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!((m, s), (5.0, 2.0));
}

fn bitvec(n: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), n)
}

proptest! {
    #[test]
    fn per_pattern_is_hamming_over_m(d in bitvec(9), y in bitvec(9)) {
        let brute = d.iter().zip(&y).filter(|(a, b)| a != b).count() as f64 / 9.0;
        prop_assert_eq!(error_per_pattern(&d, &y).unwrap(), brute);
    }

    #[test]
    fn global_error_grows_with_each_pattern_error(
        mut errors in prop::collection::vec(0.0f64..1.0, 1..20),
        i in 0usize..20,
        bump in 0.0f64..1.0,
    ) {
        let before = global_error_of(&errors);
        let i = i % errors.len();
        errors[i] = (errors[i] + bump).min(1.0);
        prop_assert!(global_error_of(&errors) >= before);
    }

    #[test]
    fn quality_tolerance_bounds(pairs in prop::collection::vec((bitvec(6), bitvec(6)), 1..30)) {
        prop_assert_eq!(quality_of_output(&pairs, 6), 1.0);
        let exact = pairs.iter().filter(|(d, y)| d == y).count() as f64 / pairs.len() as f64;
        prop_assert_eq!(quality_of_output(&pairs, 0), exact);
        let g = global_error(&pairs).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        prop_assert_eq!(g == 0.0, exact == 1.0);
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(-5.0f64..5.0, 1..200), bins in 1usize..40) {
        let h = histogram(&values, crate::model::LayerPair::IH, Stage::Initial, bins).unwrap();
        prop_assert_eq!(h.total(), values.len());
        prop_assert!(h.edges.windows(2).all(|e| e[0] <= e[1]));
    }
}
