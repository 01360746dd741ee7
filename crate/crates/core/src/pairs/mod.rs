//! Ordered paraphrase pairs built from label equality.
//!
//! Every ordered pair of distinct questions becomes one instance, so `n`
//! questions give `n·(n−1)` pairs and a label seen `c` times contributes
//! `c·(c−1)` positives.

mod split;
mod tsv;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{annotation_histogram, AnnotatedQuestion, Corpus};

pub use split::{balance, split, SplitSpec, DEFAULT_FRACTIONS, DEFAULT_SEED};
pub use tsv::{export_pairs, import_pairs, TSV_HEADER};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PairError {
    #[error("need at least 2 questions to build pairs, got {0}")]
    EmptyDomain(usize),
    #[error("duplicate question turn_id {0:?}")]
    DuplicateQuestion(String),
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("dataset has no split assignment")]
    Unsplit,
    #[error("row {row}: {message}")]
    Tsv { row: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PairError {
    fn from(err: std::io::Error) -> Self {
        PairError::Io(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One ordered sentence pair. `gold` is true when both questions carry the
/// same label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInstance {
    pub pair_id: Arc<str>,
    pub q1_id: Arc<str>,
    pub q2_id: Arc<str>,
    pub text1: Arc<str>,
    pub text2: Arc<str>,
    #[serde(with = "crate::bit")]
    pub gold: bool,
}

pub fn pair_id(q1_id: &str, q2_id: &str) -> String {
    format!("{q1_id}::{q2_id}")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub n_pairs: usize,
    pub n_positive: usize,
    pub positive_ratio: f64,
}

impl PartitionStats {
    fn from_counts(n_pairs: usize, n_positive: usize) -> PartitionStats {
        PartitionStats {
            n_pairs,
            n_positive,
            positive_ratio: if n_pairs == 0 {
                0.0
            } else {
                n_positive as f64 / n_pairs as f64
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_questions: usize,
    pub n_pairs: usize,
    pub n_positive: usize,
    pub positive_ratio: f64,
    pub splits: BTreeMap<Split, PartitionStats>,
}

/// The pair set with an optional split assignment.
///
/// Equality compares pairs and assignment; the seed is bookkeeping and does
/// not survive a TSV round trip.
#[derive(Debug, Clone)]
pub struct PairDataset {
    pairs: Vec<PairInstance>,
    assignment: Option<Vec<Split>>,
    seed: Option<u64>,
    n_questions: usize,
    stats: DatasetStats,
    index: HashMap<Arc<str>, usize>,
}

impl PartialEq for PairDataset {
    fn eq(&self, other: &Self) -> bool {
        self.pairs == other.pairs && self.assignment == other.assignment
    }
}

impl PairDataset {
    pub(crate) fn new(
        pairs: Vec<PairInstance>,
        assignment: Option<Vec<Split>>,
        seed: Option<u64>,
        n_questions: usize,
    ) -> PairDataset {
        debug_assert!(assignment.as_ref().is_none_or(|a| a.len() == pairs.len()));
        let index = pairs.iter().enumerate().map(|(i, p)| (p.pair_id.clone(), i)).collect();
        let stats = compute_stats(&pairs, assignment.as_deref(), n_questions);
        PairDataset {
            pairs,
            assignment,
            seed,
            n_questions,
            stats,
            index,
        }
    }

    pub fn pairs(&self) -> &[PairInstance] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn n_questions(&self) -> usize {
        self.n_questions
    }

    pub fn is_split(&self) -> bool {
        self.assignment.is_some()
    }

    pub fn get(&self, pair_id: &str) -> Option<&PairInstance> {
        self.index.get(pair_id).map(|&i| &self.pairs[i])
    }

    pub fn split_of(&self, pair_id: &str) -> Option<Split> {
        let i = *self.index.get(pair_id)?;
        self.assignment.as_ref().map(|a| a[i])
    }

    /// Pairs with their split, in dataset order.
    pub fn iter_assigned(&self) -> impl Iterator<Item = (&PairInstance, Option<Split>)> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (p, self.assignment.as_ref().map(|a| a[i])))
    }

    /// Pairs of one partition, in dataset order.
    pub fn partition(&self, split: Split) -> Result<Vec<PairInstance>, PairError> {
        let assignment = self.assignment.as_ref().ok_or(PairError::Unsplit)?;
        Ok(self
            .pairs
            .iter()
            .zip(assignment)
            .filter(|(_, s)| **s == split)
            .map(|(p, _)| p.clone())
            .collect())
    }

    /// One partition as a dataset of its own, still tagged with its split.
    pub fn subset(&self, split: Split) -> Result<PairDataset, PairError> {
        let pairs = self.partition(split)?;
        let assignment = vec![split; pairs.len()];
        Ok(PairDataset::new(pairs, Some(assignment), self.seed, self.n_questions))
    }

    /// Tags every pair with `split`, e.g. after [`balance`] dropped the
    /// assignment.
    pub fn assign_all(&self, split: Split) -> PairDataset {
        PairDataset::new(
            self.pairs.clone(),
            Some(vec![split; self.len()]),
            self.seed,
            self.n_questions,
        )
    }
}

fn compute_stats(pairs: &[PairInstance], assignment: Option<&[Split]>, n_questions: usize) -> DatasetStats {
    let n_positive = pairs.iter().filter(|p| p.gold).count();
    let global = PartitionStats::from_counts(pairs.len(), n_positive);
    let mut splits = BTreeMap::new();
    if let Some(assignment) = assignment {
        let mut counts: BTreeMap<Split, (usize, usize)> = Split::ALL.iter().map(|&s| (s, (0, 0))).collect();
        for (pair, split) in pairs.iter().zip(assignment) {
            let entry = counts.get_mut(split).expect("all splits present");
            entry.0 += 1;
            entry.1 += usize::from(pair.gold);
        }
        for (split, (n, pos)) in counts {
            splits.insert(split, PartitionStats::from_counts(n, pos));
        }
    }
    DatasetStats {
        n_questions,
        n_pairs: global.n_pairs,
        n_positive: global.n_positive,
        positive_ratio: global.positive_ratio,
        splits,
    }
}

/// Questions whose label occurs at least `min_count` times, in corpus order.
/// A `min_count` of 0 is treated as 1.
pub fn filter_hapaxes(corpus: &Corpus, min_count: usize) -> Vec<AnnotatedQuestion> {
    let hist = annotation_histogram(corpus);
    let min_count = min_count.max(1);
    corpus
        .questions()
        .iter()
        .filter(|q| hist[&q.label] >= min_count)
        .cloned()
        .collect()
}

/// Every ordered pair `(i, j)`, `i ≠ j`, in row-major question order.
pub fn build_pairs(questions: &[AnnotatedQuestion]) -> Result<PairDataset, PairError> {
    if questions.len() < 2 {
        return Err(PairError::EmptyDomain(questions.len()));
    }
    let mut seen = HashSet::with_capacity(questions.len());
    for q in questions {
        if !seen.insert(q.turn_id()) {
            return Err(PairError::DuplicateQuestion(q.turn_id().to_string()));
        }
    }

    let ids: Vec<Arc<str>> = questions.iter().map(|q| Arc::from(q.turn_id())).collect();
    let texts: Vec<Arc<str>> = questions.iter().map(|q| Arc::from(q.text())).collect();
    let n = questions.len();
    let mut pairs = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            pairs.push(PairInstance {
                pair_id: Arc::from(pair_id(&ids[i], &ids[j])),
                q1_id: ids[i].clone(),
                q2_id: ids[j].clone(),
                text1: texts[i].clone(),
                text2: texts[j].clone(),
                gold: questions[i].label == questions[j].label,
            });
        }
    }
    Ok(PairDataset::new(pairs, None, None, n))
}

/// `Σ c·(c−1)` over label multiplicities.
pub fn expected_positives<I: IntoIterator<Item = usize>>(multiplicities: I) -> usize {
    multiplicities.into_iter().map(|c| c * c.saturating_sub(1)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    /// Labels A×3, B×1, C×2 over six questions.
    pub(crate) fn abc_corpus() -> Corpus {
        let labels = ["A", "B", "A", "C", "A", "C"];
        let turns: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                serde_json::json!({
                    "turn_id": format!("q{i}"), "index": i, "speaker": "questioner",
                    "text": format!("question {i}?"), "annotation": l
                })
            })
            .collect();
        let line = serde_json::json!({"dialog_id": "d", "participants": ["p"], "turns": turns});
        Corpus::parse_str(&line.to_string()).unwrap()
    }

    #[test]
    fn filter_keeps_repeated_labels_in_order() {
        let corpus = abc_corpus();
        let kept: Vec<_> = filter_hapaxes(&corpus, 2)
            .iter()
            .map(|q| q.turn_id().to_string())
            .collect();
        assert_eq!(kept, ["q0", "q2", "q3", "q4", "q5"]);
        assert_eq!(filter_hapaxes(&corpus, 1).len(), 6);
        assert_eq!(filter_hapaxes(&corpus, 0).len(), 6);
        assert_eq!(filter_hapaxes(&corpus, 3).len(), 3);
        assert!(filter_hapaxes(&corpus, 4).is_empty());
    }

    #[test]
    fn all_hapaxes_filter_to_nothing() {
        let line = serde_json::json!({"dialog_id": "d", "participants": [], "turns": [
            {"turn_id": "a", "index": 0, "speaker": "questioner", "text": "x?", "annotation": "L1"},
            {"turn_id": "b", "index": 1, "speaker": "questioner", "text": "y?", "annotation": "L2"}
        ]});
        let corpus = Corpus::parse_str(&line.to_string()).unwrap();
        assert!(filter_hapaxes(&corpus, 2).is_empty());
    }

    #[test]
    fn five_question_fixture_gives_twenty_pairs() {
        let questions = filter_hapaxes(&abc_corpus(), 2);
        let ds = build_pairs(&questions).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.stats().n_positive, 8);
        assert_eq!(ds.stats().n_questions, 5);
        assert!(!ds.is_split());
        assert_eq!(ds.pairs()[0].pair_id.as_ref(), "q0::q2");
        assert!(ds.pairs()[0].gold);
    }

    #[test]
    fn two_identical_labels_give_two_positive_pairs() {
        let questions: Vec<_> = filter_hapaxes(&abc_corpus(), 2)
            .into_iter()
            .filter(|q| q.label.as_str() == "C")
            .collect();
        let ds = build_pairs(&questions).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.pairs().iter().all(|p| p.gold));
        assert_eq!(ds.pairs()[0].pair_id.as_ref(), "q3::q5");
        assert_eq!(ds.pairs()[1].pair_id.as_ref(), "q5::q3");
    }

    #[test]
    fn fewer_than_two_questions_is_an_error() {
        let questions = filter_hapaxes(&abc_corpus(), 1);
        assert_eq!(build_pairs(&questions[..1]), Err(PairError::EmptyDomain(1)));
        assert_eq!(build_pairs(&[]), Err(PairError::EmptyDomain(0)));
    }

    #[test]
    fn duplicate_question_rejected() {
        let questions = filter_hapaxes(&abc_corpus(), 1);
        let dup = vec![questions[0].clone(), questions[0].clone()];
        assert!(matches!(build_pairs(&dup), Err(PairError::DuplicateQuestion(_))));
    }

    #[test]
    fn lookup_by_pair_id() {
        let ds = build_pairs(&filter_hapaxes(&abc_corpus(), 2)).unwrap();
        let p = ds.get("q3::q5").unwrap();
        assert_eq!(p.text1.as_ref(), "question 3?");
        assert!(ds.split_of("q3::q5").is_none());
        assert_eq!(ds.partition(Split::Train), Err(PairError::Unsplit));
    }

    #[test]
    fn expected_positive_formula() {
        assert_eq!(expected_positives([3, 2]), 8);
        assert_eq!(expected_positives([1, 1, 0]), 0);
    }
}
