use std::path::PathBuf;

use bugdedup::eval::{accuracy, confusion, f1, precision, recall, ConfusionMatrix, MetricsReport};
use bugdedup::gbdt::logloss;
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Row {
    tp: u64,
    fp: u64,
    tn: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    precision: f64,
    recall: f64,
    f1: f64,
    accuracy: f64,
}

fn reference() -> Vec<Row> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/metric_reference.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn ten_confusion_matrices_match_exact_fractions() {
    let rows = reference();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let cm = ConfusionMatrix::new(r.tp, r.fp, r.tn, r.fn_);
        // single divisions are correctly rounded, so these are bit-exact
        assert_eq!(precision(&cm), r.precision, "precision {cm:?}");
        assert_eq!(recall(&cm), r.recall, "recall {cm:?}");
        assert_eq!(accuracy(&cm), r.accuracy, "accuracy {cm:?}");
        // the harmonic mean takes several roundings
        assert!((f1(&cm) - r.f1).abs() <= 1e-15, "f1 {cm:?}: {} vs {}", f1(&cm), r.f1);
    }
}

#[test]
fn headline_shaped_fixture() {
    let cm = ConfusionMatrix::new(90, 10, 0, 2);
    let (p, r) = (precision(&cm), recall(&cm));
    assert!((p - 0.900).abs() < 1e-12);
    assert!((r - 0.978).abs() < 5e-4);
    assert!((f1(&cm) - 2.0 * p * r / (p + r)).abs() < 1e-9);
}

#[test]
fn logloss_of_a_coin_flip_is_ln2() {
    let l = logloss(&[1.0], &[0.5]).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    let l = logloss(&[0.0], &[0.5]).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn logloss_clamps_certain_predictions() {
    for (y, p) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.0, 0.0)] {
        let l = logloss(&[y], &[p]).unwrap();
        assert!(l.is_finite() && l >= 0.0, "y={y} p={p}: {l}");
    }
    assert!(logloss(&[1.0, 0.0], &[0.0, 1.0]).unwrap() < 40.0);
}

#[test]
fn threshold_is_inclusive() {
    let cm = confusion(&[1.0, 0.0], &[0.5, 0.5], 0.5).unwrap();
    assert_eq!(cm, ConfusionMatrix::new(1, 1, 0, 0));
}

#[test]
fn bad_inputs_rejected() {
    assert!(confusion(&[1.0], &[0.5, 0.5], 0.5).is_err());
    assert!(confusion(&[1.0], &[0.5], 1.0).is_err());
    assert!(logloss(&[1.0], &[0.5, 0.5]).is_err());
}

proptest! {
    #[test]
    fn report_invariants(
        data in prop::collection::vec((prop::bool::ANY, 0.0f64..=1.0), 1..200),
        threshold in 0.01f64..0.99,
    ) {
        let labels: Vec<f64> = data.iter().map(|(y, _)| if *y { 1.0 } else { 0.0 }).collect();
        let probs: Vec<f64> = data.iter().map(|(_, p)| *p).collect();
        let m = MetricsReport::from_predictions(&labels, &probs, threshold).unwrap();
        prop_assert_eq!(m.confusion.total() as usize, data.len());
        for v in [m.precision, m.recall, m.f1, m.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.logloss.is_finite() && m.logloss >= 0.0);
        let lo = m.precision.min(m.recall);
        let hi = m.precision.max(m.recall);
        prop_assert!(m.f1 >= lo - 1e-12 && m.f1 <= hi + 1e-12);
    }
}
