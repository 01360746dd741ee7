//! Human verdicts on disagreements and the corpus revisions they produce.
//!
//! Each verdict says whether the model was wrong (`prediction_error`), the
//! annotation was wrong (`annotation_error`), or the data was damaged before
//! annotation ever mattered (`prep_error`). The last two must carry a
//! revision. Verdicts are appended to a JSONL ledger; replaying the ledger
//! over the base corpus reproduces every later corpus version.

mod ledger;
mod round;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::BackendError;
use crate::corpus::{AnnotationLabel, Corpus, CorpusError, Speaker};
use crate::eval::EvalError;
use crate::pairs::PairError;

pub use ledger::{AdvanceEvent, Ledger, LedgerEntry, RoundAdvance, VerdictEntry};
pub use round::{
    replay_revisions, run_round, EvalScope, PipelineConfig, RoundReport, RoundState, Tallies, VerdictRequest, Workflow,
};

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("pair {0:?} is not a disagreement of round {1}")]
    UnknownPair(String, u32),
    #[error("{0} verdicts require a revision")]
    MissingRevision(Category),
    #[error("prediction_error verdicts cannot carry a revision")]
    UnexpectedRevision,
    #[error("revision {rev_id} conflicts with the corpus: {reason}")]
    Conflict { rev_id: u64, reason: String },
    #[error("{0} disagreements are still open")]
    OpenDisagreements(usize),
    #[error("ledger entry {rev_id}: {reason}")]
    Replay { rev_id: u64, reason: String },
    #[error("idempotency key {0:?} was already used for a different operation")]
    IdempotencyConflict(String),
    #[error("ledger io: {0}")]
    Ledger(String),
    #[error(transparent)]
    Pairs(#[from] PairError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    PredictionError,
    AnnotationError,
    PrepError,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::PredictionError => "prediction_error",
            Category::AnnotationError => "annotation_error",
            Category::PrepError => "prep_error",
        }
    }

    pub fn needs_revision(self) -> bool {
        self != Category::PredictionError
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    /// Accepts the full names and the short `pred`/`ann`/`prep` forms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prediction_error" | "pred" => Ok(Category::PredictionError),
            "annotation_error" | "ann" => Ok(Category::AnnotationError),
            "prep_error" | "prep" => Ok(Category::PrepError),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pair_id: String,
    pub category: Category,
    #[serde(default)]
    pub note: String,
    pub actor: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RevisionAction {
    RelabelTurn { turn_id: String, new_label: String },
    MergeLabels { source_label: String, target_label: String },
    EditText { turn_id: String, new_text: String },
}

impl RevisionAction {
    /// Checks that do not depend on a corpus.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            RevisionAction::RelabelTurn { new_label, .. } => AnnotationLabel::new(new_label)
                .map(drop)
                .map_err(|_| "new_label is empty".to_string()),
            RevisionAction::MergeLabels {
                source_label,
                target_label,
            } => {
                let source = AnnotationLabel::new(source_label).map_err(|_| "source_label is empty")?;
                let target = AnnotationLabel::new(target_label).map_err(|_| "target_label is empty")?;
                if source == target {
                    return Err(format!("cannot merge {source} into itself"));
                }
                Ok(())
            }
            RevisionAction::EditText { new_text, .. } => {
                if new_text.trim().is_empty() {
                    Err("new_text is empty".into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub rev_id: u64,
    pub action: RevisionAction,
    /// Pair whose verdict produced this revision.
    pub provenance: String,
}

/// Applies revisions in order and returns the next corpus version.
///
/// A merge rewrites every occurrence of the source label; relabels and text
/// edits touch one turn. A revision whose target is missing at the point it
/// is applied is a conflict naming that revision.
pub fn apply_revisions(corpus: &Corpus, revisions: &[Revision]) -> Result<Corpus, TriageError> {
    let mut records = corpus.to_records();
    for rev in revisions {
        let conflict = |reason: String| TriageError::Conflict {
            rev_id: rev.rev_id,
            reason,
        };
        rev.action.validate().map_err(conflict)?;
        match &rev.action {
            RevisionAction::RelabelTurn { turn_id, new_label } => {
                let turn = records
                    .iter_mut()
                    .flat_map(|d| d.turns.iter_mut())
                    .find(|t| &t.turn_id == turn_id)
                    .ok_or_else(|| conflict(format!("turn {turn_id:?} does not exist")))?;
                if turn.speaker != Speaker::Questioner || turn.annotation.is_none() {
                    return Err(conflict(format!("turn {turn_id:?} is not an annotated question")));
                }
                turn.annotation = Some(new_label.trim().to_string());
            }
            RevisionAction::MergeLabels {
                source_label,
                target_label,
            } => {
                let source = source_label.trim();
                let mut hits = 0;
                for turn in records.iter_mut().flat_map(|d| d.turns.iter_mut()) {
                    if turn.annotation.as_deref().map(str::trim) == Some(source) {
                        turn.annotation = Some(target_label.trim().to_string());
                        hits += 1;
                    }
                }
                if hits == 0 {
                    return Err(conflict(format!("label {source:?} does not occur")));
                }
            }
            RevisionAction::EditText { turn_id, new_text } => {
                let turn = records
                    .iter_mut()
                    .flat_map(|d| d.turns.iter_mut())
                    .find(|t| &t.turn_id == turn_id)
                    .ok_or_else(|| conflict(format!("turn {turn_id:?} does not exist")))?;
                turn.text = new_text.clone();
            }
        }
    }
    Ok(corpus.derive(records)?)
}
