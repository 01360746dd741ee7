use std::collections::{BTreeSet, HashMap};

use super::{
    BackendError, BackendKind, ClassifierBackend, DecisionThreshold, JobHandle, JobState, JobStatus, PredictionRecord,
    TrainConfig,
};
use crate::corpus::{AnnotationLabel, Corpus};
use crate::pairs::PairInstance;

fn finished_job(kind: &str) -> JobHandle {
    JobHandle {
        job_id: format!("{kind}-noop"),
    }
}

fn succeeded() -> JobState {
    JobState {
        status: JobStatus::Succeeded,
        detail: "built-in backend, nothing to train".into(),
    }
}

/// Predicts the annotation-derived answer, for checking the pipeline
/// itself. By default that is each pair's own gold bit; built with
/// [`OracleBackend::from_corpus`] it answers from a fixed reference
/// corpus instead, however the pairs were labeled.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    reference: Option<HashMap<String, AnnotationLabel>>,
}

impl OracleBackend {
    pub fn gold() -> OracleBackend {
        OracleBackend::default()
    }

    pub fn from_corpus(corpus: &Corpus) -> OracleBackend {
        let reference = corpus
            .questions()
            .iter()
            .map(|q| (q.turn_id().to_string(), q.label.clone()))
            .collect();
        OracleBackend {
            reference: Some(reference),
        }
    }

    fn answer(&self, pair: &PairInstance) -> Result<bool, BackendError> {
        let Some(reference) = &self.reference else {
            return Ok(pair.gold);
        };
        let label = |id: &str| {
            reference
                .get(id)
                .ok_or_else(|| BackendError::Rejected(format!("turn {id:?} not in reference corpus")))
        };
        Ok(label(&pair.q1_id)? == label(&pair.q2_id)?)
    }
}

impl ClassifierBackend for OracleBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Oracle
    }

    fn train(&self, _: &[PairInstance], _: &[PairInstance], _: &TrainConfig) -> Result<JobHandle, BackendError> {
        Ok(finished_job("oracle"))
    }

    fn job_status(&self, _: &JobHandle) -> Result<JobState, BackendError> {
        Ok(succeeded())
    }

    fn predict(&self, pairs: &[PairInstance]) -> Result<Vec<PredictionRecord>, BackendError> {
        pairs
            .iter()
            .map(|p| {
                let yes = self.answer(p)?;
                Ok(PredictionRecord {
                    pair_id: p.pair_id.to_string(),
                    predicted: yes,
                    score: if yes { 1.0 } else { 0.0 },
                })
            })
            .collect()
    }
}

fn token_set(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|tok| !tok.is_empty())
        .collect()
}

/// Jaccard overlap of lowercased whitespace tokens with punctuation trimmed
/// from their edges. Two empty token sets score 1.
pub fn lexical_score(text1: &str, text2: &str) -> f64 {
    let a = token_set(text1);
    let b = token_set(text2);
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Token-overlap baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalBackend {
    threshold: DecisionThreshold,
}

impl LexicalBackend {
    pub fn new(threshold: DecisionThreshold) -> LexicalBackend {
        LexicalBackend { threshold }
    }
}

impl ClassifierBackend for LexicalBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Lexical
    }

    fn train(&self, _: &[PairInstance], _: &[PairInstance], _: &TrainConfig) -> Result<JobHandle, BackendError> {
        Ok(finished_job("lexical"))
    }

    fn job_status(&self, _: &JobHandle) -> Result<JobState, BackendError> {
        Ok(succeeded())
    }

    fn predict(&self, pairs: &[PairInstance]) -> Result<Vec<PredictionRecord>, BackendError> {
        Ok(pairs
            .iter()
            .map(|p| {
                PredictionRecord::from_score(p.pair_id.to_string(), lexical_score(&p.text1, &p.text2), self.threshold)
            })
            .collect())
    }
}
