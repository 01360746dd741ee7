//! Metrics against annotation-derived gold, and the disagreement queue.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::PredictionRecord;
use crate::corpus::{AnnotationLabel, Corpus};
use crate::pairs::PairInstance;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("prediction {0:?} has no gold pair")]
    ExtraPrediction(String),
    #[error("duplicate prediction for {0:?}")]
    DuplicatePrediction(String),
    #[error("{missing} gold pairs have no prediction (first: {first:?})")]
    MissingPredictions { missing: usize, first: String },
    #[error("turn {0:?} is not an annotated question of the corpus")]
    UnknownTurn(String),
}

/// Confusion counts and derived rates. Rates whose denominator is zero are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub positive_ratio: f64,
    pub majority_baseline_accuracy: f64,
    /// Baseline error over model error; `None` when the model makes no
    /// errors.
    pub error_reduction_vs_baseline: Option<f64>,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<MetricsReport, EvalError> {
        let n = tp + fp + tn + fn_;
        if n == 0 {
            return Err(EvalError::Empty);
        }
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        let accuracy = (tp + tn) as f64 / n as f64;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        let positive_ratio = (tp + fn_) as f64 / n as f64;
        let majority_baseline_accuracy = positive_ratio.max(1.0 - positive_ratio);
        let model_errors = fp + fn_;
        let baseline_errors = (tp + fn_).min(tn + fp);
        let error_reduction_vs_baseline = (model_errors > 0).then(|| baseline_errors as f64 / model_errors as f64);
        Ok(MetricsReport {
            n,
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            precision,
            recall,
            f1,
            positive_ratio,
            majority_baseline_accuracy,
            error_reduction_vs_baseline,
        })
    }

    pub fn errors(&self) -> usize {
        self.fp + self.fn_
    }

    /// One-line human summary with four-decimal percentages.
    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), percent);
        format!(
            "n={} accuracy={} precision={} recall={} f1={} baseline={}",
            self.n,
            percent(self.accuracy),
            opt(self.precision),
            opt(self.recall),
            opt(self.f1),
            percent(self.majority_baseline_accuracy),
        )
    }
}

/// `0.999725` → `"99.9725%"`.
pub fn percent(rate: f64) -> String {
    format!("{:.4}%", rate * 100.0)
}

/// Checks that predictions cover `gold` exactly and pairs each gold pair
/// with its prediction, in gold order.
fn align<'a>(
    predictions: &'a [PredictionRecord],
    gold: &'a [PairInstance],
) -> Result<Vec<(&'a PairInstance, &'a PredictionRecord)>, EvalError> {
    if gold.is_empty() && predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let gold_ids: HashSet<&str> = gold.iter().map(|p| p.pair_id.as_ref()).collect();
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !gold_ids.contains(p.pair_id.as_str()) {
            return Err(EvalError::ExtraPrediction(p.pair_id.clone()));
        }
        if by_id.insert(p.pair_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.pair_id.clone()));
        }
    }
    if by_id.len() != gold.len() {
        let first = gold
            .iter()
            .find(|g| !by_id.contains_key(g.pair_id.as_ref()))
            .map(|g| g.pair_id.to_string())
            .unwrap_or_default();
        return Err(EvalError::MissingPredictions {
            missing: gold.len() - by_id.len(),
            first,
        });
    }
    Ok(gold.iter().map(|g| (g, by_id[g.pair_id.as_ref()])).collect())
}

pub fn evaluate(predictions: &[PredictionRecord], gold: &[PairInstance]) -> Result<MetricsReport, EvalError> {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (g, p) in align(predictions, gold)? {
        match (g.gold, p.predicted) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    MetricsReport::from_counts(tp, fp, tn, fn_)
}

/// A pair where the prediction contradicts the annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    pub pair: PairInstance,
    pub gold: bool,
    pub predicted: bool,
    pub score: f64,
    pub label1: AnnotationLabel,
    pub label2: AnnotationLabel,
}

impl Disagreement {
    pub fn pair_id(&self) -> &str {
        &self.pair.pair_id
    }

    /// Distance of the score from the undecided midpoint.
    pub fn confidence(&self) -> f64 {
        (self.score - 0.5).abs()
    }

    pub fn to_entry(&self) -> QueueEntry {
        QueueEntry {
            pair_id: self.pair.pair_id.to_string(),
            gold: self.gold,
            predicted: self.predicted,
            score: self.score,
            label1: self.label1.as_str().to_string(),
            label2: self.label2.as_str().to_string(),
            text1: self.pair.text1.to_string(),
            text2: self.pair.text2.to_string(),
        }
    }
}

/// One line of the disagreement queue JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub pair_id: String,
    #[serde(with = "crate::bit")]
    pub gold: bool,
    #[serde(with = "crate::bit")]
    pub predicted: bool,
    pub score: f64,
    pub label1: String,
    pub label2: String,
    pub text1: String,
    pub text2: String,
}

/// Most confident disagreements first, ties by `pair_id`.
pub fn rank_disagreements(items: &mut [Disagreement]) {
    items.sort_by(|a, b| {
        b.confidence()
            .total_cmp(&a.confidence())
            .then_with(|| a.pair_id().cmp(b.pair_id()))
    });
}

pub fn extract_disagreements(
    predictions: &[PredictionRecord],
    gold: &[PairInstance],
    corpus: &Corpus,
) -> Result<Vec<Disagreement>, EvalError> {
    let label = |id: &str| {
        corpus
            .label_of(id)
            .cloned()
            .ok_or_else(|| EvalError::UnknownTurn(id.to_string()))
    };
    let mut out = Vec::new();
    for (g, p) in align(predictions, gold)? {
        if g.gold == p.predicted {
            continue;
        }
        out.push(Disagreement {
            pair: g.clone(),
            gold: g.gold,
            predicted: p.predicted,
            score: p.score,
            label1: label(&g.q1_id)?,
            label2: label(&g.q2_id)?,
        });
    }
    rank_disagreements(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn gold_pair(id: usize, gold: bool) -> PairInstance {
        PairInstance {
            pair_id: Arc::from(format!("q{id}::r{id}")),
            q1_id: Arc::from(format!("q{id}")),
            q2_id: Arc::from(format!("r{id}")),
            text1: Arc::from("a"),
            text2: Arc::from("b"),
            gold,
        }
    }

    fn pred(id: usize, predicted: bool, score: f64) -> PredictionRecord {
        PredictionRecord {
            pair_id: format!("q{id}::r{id}"),
            predicted,
            score,
        }
    }

    #[test]
    fn twenty_two_errors_in_eighty_thousand() {
        let report = MetricsReport::from_counts(1000, 10, 78_978, 12).unwrap();
        assert_eq!(report.n, 80_000);
        assert_eq!(report.accuracy, 0.999725);
        assert_eq!(percent(report.accuracy), "99.9725%");
    }

    #[test]
    fn all_negative_predictor_hits_the_majority_baseline() {
        // 156 positives in 10000 pairs
        let report = MetricsReport::from_counts(0, 0, 9_844, 156).unwrap();
        assert!((report.accuracy - 0.9844).abs() < 1e-12);
        assert!((report.majority_baseline_accuracy - 0.9844).abs() < 1e-6);
        assert_eq!(report.precision, None);
        assert_eq!(report.recall, Some(0.0));
        assert_eq!(report.f1, None);
        assert_eq!(report.error_reduction_vs_baseline, Some(1.0));
    }

    #[test]
    fn baseline_error_over_model_error() {
        let report = MetricsReport::from_counts(1000, 10, 78_978, 12).unwrap();
        let baseline_err = 1.0 - report.majority_baseline_accuracy;
        let expected = baseline_err / (1.0 - report.accuracy);
        assert!((report.error_reduction_vs_baseline.unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions() {
        let gold: Vec<_> = (0..10).map(|i| gold_pair(i, i % 3 == 0)).collect();
        let preds: Vec<_> = gold
            .iter()
            .enumerate()
            .map(|(i, g)| pred(i, g.gold, if g.gold { 1.0 } else { 0.0 }))
            .collect();
        let report = evaluate(&preds, &gold).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.precision, Some(1.0));
        assert_eq!(report.recall, Some(1.0));
        assert_eq!(report.f1, Some(1.0));
        assert_eq!(report.error_reduction_vs_baseline, None);
    }

    #[test]
    fn coverage_errors() {
        let gold = vec![gold_pair(0, true), gold_pair(1, false)];
        assert!(matches!(
            evaluate(&[pred(0, true, 1.0)], &gold),
            Err(EvalError::MissingPredictions { missing: 1, .. })
        ));
        assert!(matches!(
            evaluate(&[pred(0, true, 1.0), pred(1, true, 1.0), pred(2, true, 1.0)], &gold),
            Err(EvalError::ExtraPrediction(_))
        ));
        assert!(matches!(
            evaluate(&[pred(0, true, 1.0), pred(0, true, 1.0)], &gold),
            Err(EvalError::DuplicatePrediction(_))
        ));
        assert_eq!(evaluate(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn ranking_by_confidence_then_id() {
        let mk = |id: &str, score: f64| Disagreement {
            pair: PairInstance {
                pair_id: Arc::from(id),
                ..gold_pair(0, false)
            },
            gold: false,
            predicted: true,
            score,
            label1: AnnotationLabel::new("A").unwrap(),
            label2: AnnotationLabel::new("B").unwrap(),
        };
        let mut items = vec![mk("c", 0.6), mk("b", 0.99), mk("a", 0.6), mk("d", 0.01)];
        rank_disagreements(&mut items);
        let order: Vec<_> = items.iter().map(|d| d.pair_id().to_string()).collect();
        // 0.99 and 0.01 are equally confident
        assert_eq!(order, ["b", "d", "a", "c"]);
    }

    #[test]
    fn queue_entry_shape() {
        let d = Disagreement {
            pair: gold_pair(3, true),
            gold: true,
            predicted: false,
            score: 0.1,
            label1: AnnotationLabel::new("e==jealousy").unwrap(),
            label2: AnnotationLabel::new("e==jealousy").unwrap(),
        };
        let json = serde_json::to_value(d.to_entry()).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"pair_id": "q3::r3", "gold": 1, "predicted": 0, "score": 0.1,
                "label1": "e==jealousy", "label2": "e==jealousy", "text1": "a", "text2": "b"})
        );
    }
}
