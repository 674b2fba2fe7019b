use std::path::PathBuf;

use bugdedup::features::{
    braycurtis, canberra, cityblock, cosine, distance_features, euclidean, jaccard, minkowski,
};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    x: Vec<f64>,
    y: Vec<f64>,
    euclidean: f64,
    canberra: f64,
    jaccard: f64,
    cityblock: f64,
    cosine: f64,
    minkowski: f64,
    braycurtis: f64,
}

#[test]
fn matches_reference_on_1000_pairs() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/distance_reference.json");
    let cases: Vec<Case> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cases.len(), 1000);
    for (n, c) in cases.iter().enumerate() {
        let got = distance_features(&c.x, &c.y).unwrap();
        let want = [c.euclidean, c.canberra, c.jaccard, c.cityblock, c.cosine, c.minkowski, c.braycurtis];
        for (k, (g, w)) in got.iter().zip(want).enumerate() {
            assert!((g - w).abs() <= 1e-9, "case {n} distance {k}: {g} vs {w}");
        }
    }
}

fn vec_pair(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        let v = || prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => -10.0f64..10.0], d);
        (v(), v(), v())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_axioms((x, y, z) in vec_pair(12)) {
        for d in [euclidean as fn(&[f64], &[f64]) -> f64, cityblock, |a: &[f64], b: &[f64]| minkowski(a, b, 3.0)] {
            prop_assert_eq!(d(&x, &x), 0.0);
            prop_assert!((d(&x, &y) - d(&y, &x)).abs() <= 1e-12);
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
        }
    }

    #[test]
    fn ranges_and_finiteness((x, y, _z) in vec_pair(12)) {
        let all = distance_features(&x, &y).unwrap();
        prop_assert!(all.iter().all(|v| v.is_finite() && *v >= 0.0));
        let c = cosine(&x, &y);
        prop_assert!((0.0..=2.0).contains(&c));
        prop_assert!((0.0..=1.0).contains(&jaccard(&x, &y)));
        prop_assert!(canberra(&x, &y) <= x.len() as f64 + 1e-12);
    }

    #[test]
    fn braycurtis_unit_range_on_nonnegative((x, y, _z) in vec_pair(12)) {
        let x: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let y: Vec<f64> = y.iter().map(|v| v.abs()).collect();
        let b = braycurtis(&x, &y);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
    }

    #[test]
    fn zero_vector_guards(d in 1usize..16, y in prop::collection::vec(-5.0f64..5.0, 16)) {
        let zero = vec![0.0; d];
        prop_assert_eq!(distance_features(&zero, &zero).unwrap(), [0.0; 7]);
        let out = distance_features(&zero, &y[..d]).unwrap();
        prop_assert!(out.iter().all(|v| v.is_finite()));
    }
}
