//! Paraphrase classifier backends.
//!
//! The pipeline never links a model runtime. A backend is either one of the
//! two built-ins ([`OracleBackend`], [`LexicalBackend`]) or a remote service
//! speaking the `/v1` JSON protocol in [`wire`], reached through
//! [`RemoteBackend`].

mod builtin;
mod remote;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::pairs::PairInstance;

pub use builtin::{lexical_score, LexicalBackend, OracleBackend};
pub use remote::{RemoteBackend, RemoteOptions};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend rejected request: {0}")]
    Rejected(String),
    #[error("training job {job_id} failed: {detail}")]
    TrainingFailed { job_id: String, detail: String },
    #[error("timed out waiting for training job {0}")]
    Timeout(String),
    #[error("io error: {0}")]
    Io(String),
}

impl BackendError {
    /// True for failures of the backend or the link to it, as opposed to
    /// bad input on our side.
    pub fn is_transport(&self) -> bool {
        !matches!(self, BackendError::Config(_) | BackendError::Rejected(_))
    }
}

/// Turns a paraphrase probability into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionThreshold(f64);

impl DecisionThreshold {
    pub fn new(value: f64) -> Result<DecisionThreshold, BackendError> {
        // a zero threshold would accept a score of exactly 0
        if !(value > 0.0 && value <= 1.0) {
            return Err(BackendError::Config(format!(
                "threshold must lie in (0, 1], got {value}"
            )));
        }
        Ok(DecisionThreshold(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn decide(self, score: f64) -> bool {
        score >= self.0
    }
}

impl Default for DecisionThreshold {
    fn default() -> Self {
        DecisionThreshold(DEFAULT_THRESHOLD)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pair_id: String,
    #[serde(rename = "label", with = "crate::bit")]
    pub predicted: bool,
    /// Probability of paraphrase.
    pub score: f64,
}

impl PredictionRecord {
    pub fn from_score(pair_id: impl Into<String>, score: f64, threshold: DecisionThreshold) -> Self {
        PredictionRecord {
            pair_id: pair_id.into(),
            predicted: threshold.decide(score),
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Oracle,
    Lexical,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Remote => "remote",
            BackendKind::Oracle => "oracle",
            BackendKind::Lexical => "lexical",
        })
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "oracle" => Ok(BackendKind::Oracle),
            "lexical" => Ok(BackendKind::Lexical),
            other => Err(format!("unknown backend kind {other:?}")),
        }
    }
}

/// Which backend to use and how to reach it.
///
/// Recognised params: `threshold` (all kinds), and for remote backends
/// `batch_size`, `max_in_flight`, `timeout_secs` and `data_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Url>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl BackendDescriptor {
    pub fn oracle() -> Self {
        BackendDescriptor {
            kind: BackendKind::Oracle,
            endpoint: None,
            params: BTreeMap::new(),
        }
    }

    pub fn lexical(threshold: f64) -> Self {
        BackendDescriptor {
            kind: BackendKind::Lexical,
            endpoint: None,
            params: BTreeMap::from([("threshold".to_string(), threshold.to_string())]),
        }
    }

    pub fn remote(endpoint: Url) -> Self {
        BackendDescriptor {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint),
            params: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match (self.kind, &self.endpoint) {
            (BackendKind::Remote, None) => Err(BackendError::Config("remote backend requires an endpoint".into())),
            (BackendKind::Oracle | BackendKind::Lexical, Some(url)) => Err(BackendError::Config(format!(
                "{} backend does not take an endpoint (got {url})",
                self.kind
            ))),
            _ => Ok(()),
        }
    }

    fn param<T: FromStr>(&self, key: &str) -> Result<Option<T>, BackendError> {
        self.params
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| BackendError::Config(format!("bad value {raw:?} for {key}")))
            })
            .transpose()
    }

    pub fn threshold(&self) -> Result<DecisionThreshold, BackendError> {
        match self.param::<f64>("threshold")? {
            Some(t) => DecisionThreshold::new(t),
            None => Ok(DecisionThreshold::default()),
        }
    }

    /// Instantiates the described backend.
    pub fn connect(&self) -> Result<Box<dyn ClassifierBackend>, BackendError> {
        self.validate()?;
        let threshold = self.threshold()?;
        Ok(match self.kind {
            BackendKind::Oracle => Box::new(OracleBackend::gold()),
            BackendKind::Lexical => Box::new(LexicalBackend::new(threshold)),
            BackendKind::Remote => {
                let defaults = RemoteOptions::default();
                let options = RemoteOptions {
                    batch_size: self.param("batch_size")?.unwrap_or(defaults.batch_size),
                    max_in_flight: self.param("max_in_flight")?.unwrap_or(defaults.max_in_flight),
                    timeout: self
                        .param::<u64>("timeout_secs")?
                        .map_or(defaults.timeout, Duration::from_secs),
                    data_dir: self.param("data_dir")?.or(defaults.data_dir),
                    threshold,
                };
                Box::new(RemoteBackend::new(self.endpoint.clone().expect("validated"), options)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobHandle {
    pub job_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobState {
    pub status: JobStatus,
    #[serde(default)]
    pub detail: String,
}

pub type TrainConfig = BTreeMap<String, serde_json::Value>;

/// A paraphrase classifier.
pub trait ClassifierBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Starts training from scratch. Built-ins return a finished job.
    fn train(
        &self,
        train: &[PairInstance],
        val: &[PairInstance],
        config: &TrainConfig,
    ) -> Result<JobHandle, BackendError>;

    fn job_status(&self, job: &JobHandle) -> Result<JobState, BackendError>;

    /// One record per pair, in input order. Fails as a whole if any part
    /// of the batch fails.
    fn predict(&self, pairs: &[PairInstance]) -> Result<Vec<PredictionRecord>, BackendError>;
}

/// Polls until the job leaves `running`.
pub fn wait_for_job(
    backend: &dyn ClassifierBackend,
    job: &JobHandle,
    poll_interval: Duration,
    timeout: Duration,
) -> Result<JobState, BackendError> {
    let start = Instant::now();
    loop {
        let state = backend.job_status(job)?;
        match state.status {
            JobStatus::Succeeded => return Ok(state),
            JobStatus::Failed => {
                return Err(BackendError::TrainingFailed {
                    job_id: job.job_id.clone(),
                    detail: state.detail,
                })
            }
            JobStatus::Running if start.elapsed() >= timeout => return Err(BackendError::Timeout(job.job_id.clone())),
            JobStatus::Running => std::thread::sleep(poll_interval),
        }
    }
}
