#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use concord_core::classifier::{
    BackendError, BackendKind, ClassifierBackend, JobHandle, JobState, JobStatus, PredictionRecord, TrainConfig,
};
use concord_core::corpus::{DialogRecord, Speaker, TurnRecord};
use concord_core::{Corpus, PairInstance};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> Corpus {
    let file = std::fs::File::open(fixture_path(name)).unwrap();
    Corpus::parse(std::io::BufReader::new(file)).unwrap()
}

/// One question per label, grouped four questions to a dialog, each
/// followed by an answer turn. Question `i` has turn id `q{i}`.
pub fn corpus_from_labels<S: AsRef<str>>(labels: &[S]) -> Corpus {
    let mut dialogs = Vec::new();
    for (d, chunk) in labels.chunks(4).enumerate() {
        let mut turns = Vec::new();
        for (k, label) in chunk.iter().enumerate() {
            let i = d * 4 + k;
            turns.push(TurnRecord {
                turn_id: format!("q{i}"),
                index: 2 * k,
                speaker: Speaker::Questioner,
                text: format!("is it question number {i}?"),
                annotation: Some(label.as_ref().to_string()),
            });
            turns.push(TurnRecord {
                turn_id: format!("a{i}"),
                index: 2 * k + 1,
                speaker: Speaker::Answerer,
                text: "yes".into(),
                annotation: None,
            });
        }
        dialogs.push(DialogRecord {
            dialog_id: format!("d{d}"),
            participants: vec!["asker".into(), "answerer".into()],
            turns,
        });
    }
    Corpus::from_records(dialogs, 1, None).unwrap()
}

/// Label multiplicities by brute force.
pub fn multiplicities(corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for q in corpus.questions() {
        *out.entry(q.label.as_str().to_string()).or_insert(0) += 1;
    }
    out
}

/// Gives a fixed answer for listed `(text1, text2)` pairs and echoes the
/// gold bit for everything else.
pub struct TextScriptedModel {
    pub answers: HashMap<(String, String), bool>,
}

impl TextScriptedModel {
    pub fn new<'a>(answers: impl IntoIterator<Item = (&'a str, &'a str, bool)>) -> Self {
        TextScriptedModel {
            answers: answers
                .into_iter()
                .map(|(a, b, y)| ((a.to_string(), b.to_string()), y))
                .collect(),
        }
    }
}

impl ClassifierBackend for TextScriptedModel {
    fn kind(&self) -> BackendKind {
        BackendKind::Oracle
    }

    fn train(&self, _: &[PairInstance], _: &[PairInstance], _: &TrainConfig) -> Result<JobHandle, BackendError> {
        Ok(JobHandle {
            job_id: "scripted".into(),
        })
    }

    fn job_status(&self, _: &JobHandle) -> Result<JobState, BackendError> {
        Ok(JobState {
            status: JobStatus::Succeeded,
            detail: String::new(),
        })
    }

    fn predict(&self, pairs: &[PairInstance]) -> Result<Vec<PredictionRecord>, BackendError> {
        Ok(pairs
            .iter()
            .map(|p| {
                let key = (p.text1.to_string(), p.text2.to_string());
                let predicted = self.answers.get(&key).copied().unwrap_or(p.gold);
                PredictionRecord {
                    pair_id: p.pair_id.to_string(),
                    predicted,
                    score: if predicted { 0.9 } else { 0.1 },
                }
            })
            .collect())
    }
}
