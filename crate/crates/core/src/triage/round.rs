//! Rounds of build → predict → evaluate → triage → revise.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ledger::{AdvanceEvent, Ledger, LedgerEntry, RoundAdvance, VerdictEntry};
use super::{apply_revisions, Category, Revision, RevisionAction, TriageError, Verdict};
use crate::classifier::{wait_for_job, ClassifierBackend, TrainConfig};
use crate::corpus::Corpus;
use crate::eval::{evaluate, extract_disagreements, Disagreement, MetricsReport};
use crate::pairs::{build_pairs, filter_hapaxes, split, PairDataset, PairInstance, Split, SplitSpec};

/// Which pairs a round predicts on and scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalScope {
    Train,
    Val,
    Test,
    All,
}

impl FromStr for EvalScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(EvalScope::All),
            other => other
                .parse::<Split>()
                .map(|s| match s {
                    Split::Train => EvalScope::Train,
                    Split::Val => EvalScope::Val,
                    Split::Test => EvalScope::Test,
                })
                .map_err(|_| format!("unknown evaluation scope {other:?}")),
        }
    }
}

impl fmt::Display for EvalScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalScope::Train => "train",
            EvalScope::Val => "val",
            EvalScope::Test => "test",
            EvalScope::All => "all",
        })
    }
}

impl EvalScope {
    pub fn select(self, dataset: &PairDataset) -> Result<Vec<PairInstance>, TriageError> {
        let split = match self {
            EvalScope::All => return Ok(dataset.pairs().to_vec()),
            EvalScope::Train => Split::Train,
            EvalScope::Val => Split::Val,
            EvalScope::Test => Split::Test,
        };
        Ok(dataset.partition(split)?)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub min_count: usize,
    pub split: SplitSpec,
    pub eval_scope: EvalScope,
    pub train_config: TrainConfig,
    pub poll_interval: Duration,
    pub train_timeout: Duration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            min_count: 2,
            split: SplitSpec::default(),
            eval_scope: EvalScope::Test,
            train_config: TrainConfig::new(),
            poll_interval: Duration::from_secs(2),
            train_timeout: Duration::from_secs(6 * 3600),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub prediction_error: usize,
    pub annotation_error: usize,
    pub prep_error: usize,
}

impl Tallies {
    pub fn total(&self) -> usize {
        self.prediction_error + self.annotation_error + self.prep_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub corpus_version: u64,
    pub n_questions: usize,
    pub n_pairs: usize,
    pub n_positive: usize,
    pub metrics: MetricsReport,
    pub tallies: Tallies,
    pub total: usize,
    pub open: usize,
    pub closed: usize,
    pub cursor: usize,
}

/// One round: the corpus version it was built from, its pairs, metrics and
/// ranked disagreements, and the latest verdict per disagreement.
#[derive(Debug, Clone)]
pub struct RoundState {
    round: u32,
    corpus: Arc<Corpus>,
    dataset: Arc<PairDataset>,
    metrics: MetricsReport,
    disagreements: Arc<Vec<Disagreement>>,
    positions: Arc<HashMap<String, usize>>,
    verdicts: BTreeMap<String, VerdictEntry>,
    verdicts_recorded: usize,
}

/// Builds pairs from `corpus`, splits them, trains from scratch, predicts
/// on the evaluation scope and ranks the disagreements.
pub fn run_round(
    corpus: Arc<Corpus>,
    round: u32,
    config: &PipelineConfig,
    backend: &dyn ClassifierBackend,
) -> Result<RoundState, TriageError> {
    let questions = filter_hapaxes(&corpus, config.min_count);
    let dataset = split(&build_pairs(&questions)?, &config.split)?;
    tracing::info!(
        round,
        corpus_version = corpus.version_id(),
        questions = questions.len(),
        pairs = dataset.len(),
        "built pairs"
    );
    let train = dataset.partition(Split::Train)?;
    let val = dataset.partition(Split::Val)?;
    let job = backend.train(&train, &val, &config.train_config)?;
    wait_for_job(backend, &job, config.poll_interval, config.train_timeout)?;

    let slice = config.eval_scope.select(&dataset)?;
    let predictions = backend.predict(&slice)?;
    let metrics = evaluate(&predictions, &slice)?;
    let disagreements = extract_disagreements(&predictions, &slice, &corpus)?;
    tracing::info!(
        round,
        accuracy = metrics.accuracy,
        disagreements = disagreements.len(),
        "evaluated"
    );
    let positions = disagreements
        .iter()
        .enumerate()
        .map(|(i, d)| (d.pair_id().to_string(), i))
        .collect();
    Ok(RoundState {
        round,
        corpus,
        dataset: Arc::new(dataset),
        metrics,
        disagreements: Arc::new(disagreements),
        positions: Arc::new(positions),
        verdicts: BTreeMap::new(),
        verdicts_recorded: 0,
    })
}

/// Revisions staged by the latest verdicts, in ledger order, with exact
/// duplicates dropped (two pairs flagging the same merge stage it once).
fn staged<'a>(latest: impl Iterator<Item = &'a VerdictEntry>) -> Vec<Revision> {
    let mut revisions: Vec<Revision> = latest.filter_map(VerdictEntry::revision).collect();
    revisions.sort_by_key(|r| r.rev_id);
    let mut seen: HashSet<RevisionAction> = HashSet::new();
    revisions.retain(|r| seen.insert(r.action.clone()));
    revisions
}

impl RoundState {
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn dataset(&self) -> &Arc<PairDataset> {
        &self.dataset
    }

    pub fn metrics(&self) -> &MetricsReport {
        &self.metrics
    }

    /// Ranked, most confident first.
    pub fn disagreements(&self) -> &[Disagreement] {
        &self.disagreements
    }

    pub fn disagreement(&self, pair_id: &str) -> Option<&Disagreement> {
        self.positions.get(pair_id).map(|&i| &self.disagreements[i])
    }

    pub fn verdict(&self, pair_id: &str) -> Option<&VerdictEntry> {
        self.verdicts.get(pair_id)
    }

    pub fn is_open(&self, pair_id: &str) -> bool {
        self.positions.contains_key(pair_id) && !self.verdicts.contains_key(pair_id)
    }

    pub fn total(&self) -> usize {
        self.disagreements.len()
    }

    pub fn closed(&self) -> usize {
        self.verdicts.len()
    }

    pub fn open(&self) -> usize {
        self.total() - self.closed()
    }

    /// Verdicts recorded this round, superseded ones included.
    pub fn verdicts_recorded(&self) -> usize {
        self.verdicts_recorded
    }

    /// Index of the first open item in the ranked queue, or the queue
    /// length when everything is closed.
    pub fn cursor(&self) -> usize {
        self.disagreements
            .iter()
            .position(|d| !self.verdicts.contains_key(d.pair_id()))
            .unwrap_or(self.disagreements.len())
    }

    pub fn tallies(&self) -> Tallies {
        let mut t = Tallies::default();
        for v in self.verdicts.values() {
            match v.category {
                Category::PredictionError => t.prediction_error += 1,
                Category::AnnotationError => t.annotation_error += 1,
                Category::PrepError => t.prep_error += 1,
            }
        }
        t
    }

    pub fn staged_revisions(&self) -> Vec<Revision> {
        staged(self.verdicts.values())
    }

    pub fn report(&self) -> RoundReport {
        let stats = self.dataset.stats();
        RoundReport {
            round: self.round,
            corpus_version: self.corpus.version_id(),
            n_questions: stats.n_questions,
            n_pairs: stats.n_pairs,
            n_positive: stats.n_positive,
            metrics: self.metrics.clone(),
            tallies: self.tallies(),
            total: self.total(),
            open: self.open(),
            closed: self.closed(),
            cursor: self.cursor(),
        }
    }

    /// Validates a verdict against this round without recording it.
    pub fn check_verdict(
        &self,
        pair_id: &str,
        category: Category,
        action: Option<&RevisionAction>,
        rev_id: u64,
    ) -> Result<(), TriageError> {
        if !self.positions.contains_key(pair_id) {
            return Err(TriageError::UnknownPair(pair_id.to_string(), self.round));
        }
        match (category.needs_revision(), action) {
            (true, None) => return Err(TriageError::MissingRevision(category)),
            (false, Some(_)) => return Err(TriageError::UnexpectedRevision),
            (false, None) => return Ok(()),
            (true, Some(_)) => {}
        }
        let action = action.expect("matched above");
        action
            .validate()
            .map_err(|reason| TriageError::Conflict { rev_id, reason })?;

        // the new revision must apply on top of what is already staged
        let mut revisions = staged(self.verdicts.values().filter(|v| v.pair_id != pair_id));
        if !revisions.iter().any(|r| &r.action == action) {
            revisions.push(Revision {
                rev_id,
                action: action.clone(),
                provenance: pair_id.to_string(),
            });
        }
        apply_revisions(&self.corpus, &revisions).map(drop)
    }

    fn insert_verdict(&mut self, entry: VerdictEntry) {
        self.verdicts_recorded += 1;
        self.verdicts.insert(entry.pair_id.clone(), entry);
    }
}

impl VerdictEntry {
    pub fn verdict(&self) -> Verdict {
        Verdict {
            pair_id: self.pair_id.clone(),
            category: self.category,
            note: self.note.clone(),
            actor: self.actor.clone(),
            timestamp: self.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub pair_id: String,
    pub category: Category,
    #[serde(default)]
    pub note: String,
    pub actor: String,
    #[serde(default, alias = "revision")]
    pub action: Option<RevisionAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

/// All rounds so far plus the ledger that produced them.
///
/// The ledger is the only durable state: [`Workflow::start`] rebuilds every
/// round by replaying it over the base corpus, so a restart lands on the
/// same state as before.
#[derive(Debug)]
pub struct Workflow {
    config: PipelineConfig,
    rounds: Vec<RoundState>,
    ledger: Ledger,
}

impl Workflow {
    pub fn start(
        base: Corpus,
        config: PipelineConfig,
        backend: &dyn ClassifierBackend,
        ledger: Ledger,
    ) -> Result<Workflow, TriageError> {
        let first = run_round(Arc::new(base), 1, &config, backend)?;
        let replay: Vec<LedgerEntry> = ledger.entries().to_vec();
        let mut workflow = Workflow {
            config,
            rounds: vec![first],
            ledger,
        };
        for entry in replay {
            workflow.replay_entry(entry, backend)?;
        }
        Ok(workflow)
    }

    fn replay_entry(&mut self, entry: LedgerEntry, backend: &dyn ClassifierBackend) -> Result<(), TriageError> {
        let current = self.current().round;
        match entry {
            LedgerEntry::Verdict(v) => {
                let fail = |reason: String| TriageError::Replay {
                    rev_id: v.rev_id,
                    reason,
                };
                if v.round != current {
                    return Err(fail(format!(
                        "verdict for round {} while replaying round {current}",
                        v.round
                    )));
                }
                self.current()
                    .check_verdict(&v.pair_id, v.category, v.action.as_ref(), v.rev_id)
                    .map_err(|e| fail(e.to_string()))?;
                self.current_mut().insert_verdict(v);
            }
            LedgerEntry::Advance(a) => {
                if a.round != current + 1 {
                    return Err(TriageError::Replay {
                        rev_id: a.rev_id,
                        reason: format!("advance to round {} from round {current}", a.round),
                    });
                }
                let next = self.prepare_next_round(backend).map_err(|e| TriageError::Replay {
                    rev_id: a.rev_id,
                    reason: e.to_string(),
                })?;
                self.rounds.push(next);
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn current(&self) -> &RoundState {
        self.rounds.last().expect("a workflow always has a round")
    }

    fn current_mut(&mut self) -> &mut RoundState {
        self.rounds.last_mut().expect("a workflow always has a round")
    }

    pub fn rounds(&self) -> &[RoundState] {
        &self.rounds
    }

    pub fn round(&self, n: u32) -> Option<&RoundState> {
        self.rounds.iter().find(|r| r.round == n)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Records a verdict in the current round. A verdict on an already
    /// closed pair supersedes the earlier one; both stay in the ledger.
    pub fn submit_verdict(&mut self, request: VerdictRequest) -> Result<VerdictEntry, TriageError> {
        if let Some(key) = &request.idempotency_key {
            if let Some(prior) = self.ledger.find_key(key) {
                return match prior {
                    LedgerEntry::Verdict(v) => Ok(v.clone()),
                    LedgerEntry::Advance(_) => Err(TriageError::IdempotencyConflict(key.clone())),
                };
            }
        }
        let rev_id = self.ledger.next_rev_id();
        self.current()
            .check_verdict(&request.pair_id, request.category, request.action.as_ref(), rev_id)?;
        let entry = VerdictEntry {
            rev_id,
            timestamp: request.timestamp.unwrap_or_else(Utc::now),
            actor: request.actor,
            pair_id: request.pair_id,
            category: request.category,
            action: request.action,
            note: request.note,
            round: self.current().round,
            idempotency_key: request.idempotency_key,
        };
        self.ledger.append(LedgerEntry::Verdict(entry.clone()))?;
        self.current_mut().insert_verdict(entry.clone());
        Ok(entry)
    }

    fn prepare_next_round(&self, backend: &dyn ClassifierBackend) -> Result<RoundState, TriageError> {
        let current = self.current();
        if current.open() > 0 {
            return Err(TriageError::OpenDisagreements(current.open()));
        }
        let revised = apply_revisions(&current.corpus, &current.staged_revisions())?;
        run_round(Arc::new(revised), current.round + 1, &self.config, backend)
    }

    /// Applies the staged revisions, rebuilds and re-evaluates. Requires
    /// every disagreement of the current round to be closed.
    pub fn next_round(
        &mut self,
        actor: &str,
        idempotency_key: Option<String>,
        backend: &dyn ClassifierBackend,
    ) -> Result<&RoundState, TriageError> {
        if let Some(key) = &idempotency_key {
            if let Some(prior) = self.ledger.find_key(key) {
                return match prior {
                    LedgerEntry::Advance(_) => Ok(self.current()),
                    LedgerEntry::Verdict(_) => Err(TriageError::IdempotencyConflict(key.clone())),
                };
            }
        }
        let next = self.prepare_next_round(backend)?;
        self.ledger.append(LedgerEntry::Advance(RoundAdvance {
            rev_id: self.ledger.next_rev_id(),
            timestamp: Utc::now(),
            actor: actor.to_string(),
            event: AdvanceEvent::NextRound,
            round: next.round,
            idempotency_key,
        }))?;
        self.rounds.push(next);
        Ok(self.current())
    }
}

/// Replays the revisions in a ledger over `base` without re-running any
/// model. Each closed round's staged revisions become one corpus version;
/// with `include_pending`, revisions staged in the still-open round are
/// applied too.
pub fn replay_revisions(base: &Corpus, entries: &[LedgerEntry], include_pending: bool) -> Result<Corpus, TriageError> {
    let mut corpus = base.clone();
    let mut latest: BTreeMap<&str, &VerdictEntry> = BTreeMap::new();
    for entry in entries {
        match entry {
            LedgerEntry::Verdict(v) => {
                latest.insert(&v.pair_id, v);
            }
            LedgerEntry::Advance(_) => {
                corpus = apply_revisions(&corpus, &staged(latest.values().copied()))?;
                latest.clear();
            }
        }
    }
    if include_pending && !latest.is_empty() {
        corpus = apply_revisions(&corpus, &staged(latest.values().copied()))?;
    }
    Ok(corpus)
}
