use std::sync::Arc;

use concord_core::classifier::PredictionRecord;
use concord_core::eval::{evaluate, EvalError, MetricsReport};
use concord_core::PairInstance;
use proptest::prelude::*;

fn pair(i: usize, gold: bool) -> PairInstance {
    PairInstance {
        pair_id: Arc::from(format!("q{i}::r{i}")),
        q1_id: Arc::from(format!("q{i}")),
        q2_id: Arc::from(format!("r{i}")),
        text1: Arc::from("x"),
        text2: Arc::from("y"),
        gold,
    }
}

fn prediction(i: usize, predicted: bool) -> PredictionRecord {
    PredictionRecord {
        pair_id: format!("q{i}::r{i}"),
        predicted,
        score: if predicted { 0.8 } else { 0.2 },
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

proptest! {
    #[test]
    fn confusion_matches_recount(rows in prop::collection::vec((any::<bool>(), any::<bool>()), 1..300), seed in any::<u64>()) {
        let gold: Vec<_> = rows.iter().enumerate().map(|(i, (g, _))| pair(i, *g)).collect();
        let mut preds: Vec<_> = rows.iter().enumerate().map(|(i, (_, p))| prediction(i, *p)).collect();
        // order of predictions is irrelevant
        let k = (seed as usize) % preds.len();
        preds.rotate_left(k);
        let m = evaluate(&preds, &gold).unwrap();

        let count = |g: bool, p: bool| rows.iter().filter(|r| **r == (g, p)).count();
        let (tp, fp, tn, fn_) = (count(true, true), count(false, true), count(false, false), count(true, false));
        prop_assert_eq!((m.tp, m.fp, m.tn, m.fn_), (tp, fp, tn, fn_));
        let n = rows.len() as f64;
        prop_assert!(close(m.accuracy, (tp + tn) as f64 / n));
        prop_assert!(close(m.positive_ratio, (tp + fn_) as f64 / n));
        let pos = (tp + fn_) as f64;
        prop_assert!(close(m.majority_baseline_accuracy, pos.max(n - pos) / n));
        prop_assert_eq!(m.precision.is_some(), tp + fp > 0);
        prop_assert_eq!(m.recall.is_some(), tp + fn_ > 0);
        if let (Some(p), Some(r)) = (m.precision, m.recall) {
            prop_assert!(close(p, tp as f64 / (tp + fp) as f64));
            prop_assert!(close(r, tp as f64 / (tp + fn_) as f64));
            if let Some(f1) = m.f1 {
                prop_assert!(close(f1, 2.0 * p * r / (p + r)));
            }
        }
        let errors = fp + fn_;
        prop_assert_eq!(m.errors(), errors);
        match m.error_reduction_vs_baseline {
            None => prop_assert_eq!(errors, 0),
            Some(ratio) => prop_assert!(close(ratio, pos.min(n - pos) / errors as f64)),
        }
    }
}

#[test]
fn coverage_errors() {
    let gold = vec![pair(0, true), pair(1, false)];
    assert!(matches!(
        evaluate(&[prediction(0, true)], &gold),
        Err(EvalError::MissingPredictions { missing: 1, .. })
    ));
    assert!(matches!(
        evaluate(&[prediction(0, true), prediction(1, true), prediction(2, true)], &gold),
        Err(EvalError::ExtraPrediction(_))
    ));
    assert!(matches!(
        evaluate(&[prediction(0, true), prediction(0, true)], &gold),
        Err(EvalError::DuplicatePrediction(_))
    ));
    assert!(matches!(evaluate(&[], &[]), Err(EvalError::Empty)));
}

#[test]
fn metrics_json_shape() {
    let m = MetricsReport::from_counts(3, 1, 5, 1).unwrap();
    let json = serde_json::to_value(&m).unwrap();
    for key in [
        "n",
        "tp",
        "fp",
        "tn",
        "fn",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "majority_baseline_accuracy",
        "error_reduction_vs_baseline",
    ] {
        assert!(json.get(key).is_some(), "missing {key}: {json}");
    }
}
