//! HTTP service for the triage loop.
//!
//! State is the base corpus file plus the verdict ledger. On startup the
//! ledger is replayed; afterwards every mutation goes through one writer
//! that appends to the ledger before the in-memory state changes. Reads are
//! served from an immutable snapshot swapped in after each mutation.

mod api;
mod error;
mod reference;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use concord_core::classifier::{BackendDescriptor, BackendError, ClassifierBackend};
use concord_core::triage::{Ledger, PipelineConfig, RoundState, TriageError, Workflow};
use concord_core::{Corpus, CorpusError};
use thiserror::Error;

pub use api::router;
pub use error::ApiError;
pub use reference::{reference_router, serve_reference};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub ledger: PathBuf,
    pub backend: BackendDescriptor,
    pub pipeline: PipelineConfig,
    /// Bearer token required on every `/api` request except health. `None`
    /// disables the check.
    pub token: Option<String>,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("cannot read corpus {path}: {message}")]
    Corpus { path: PathBuf, message: String },
    #[error("cannot open ledger {path}: {source}")]
    Ledger { path: PathBuf, source: TriageError },
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("replaying the ledger: {0}")]
    Replay(TriageError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server: {0}")]
    Serve(std::io::Error),
}

/// What readers see: the rounds as of the last completed mutation.
#[derive(Debug)]
pub struct Snapshot {
    pub rounds: Vec<RoundState>,
    pub ledger_entries: usize,
}

impl Snapshot {
    fn of(workflow: &Workflow) -> Snapshot {
        Snapshot {
            rounds: workflow.rounds().to_vec(),
            ledger_entries: workflow.ledger().entries().len(),
        }
    }

    pub fn current(&self) -> &RoundState {
        self.rounds.last().expect("at least one round")
    }

    pub fn round(&self, n: u32) -> Option<&RoundState> {
        self.rounds.iter().find(|r| r.round() == n)
    }
}

pub(crate) struct Writer {
    pub workflow: Workflow,
    pub backend: Box<dyn ClassifierBackend>,
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<Writer>,
    token: Option<String>,
}

impl AppState {
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Runs `f` as the single writer and publishes the resulting state.
    pub(crate) fn write<T>(&self, f: impl FnOnce(&mut Writer) -> Result<T, TriageError>) -> Result<T, TriageError> {
        let mut writer = self.writer.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        let out = f(&mut writer);
        *self.snapshot.write().expect("snapshot lock") = Arc::new(Snapshot::of(&writer.workflow));
        out
    }
}

/// Loads the corpus, connects the backend and replays the ledger. Blocks
/// for as long as the first round takes to train and predict.
pub fn load(config: &ServiceConfig) -> Result<Arc<AppState>, StartupError> {
    load_with_backend(config, config.backend.connect()?)
}

/// [`load`] with an already connected backend; `config.backend` is ignored.
pub fn load_with_backend(
    config: &ServiceConfig,
    backend: Box<dyn ClassifierBackend>,
) -> Result<Arc<AppState>, StartupError> {
    let corpus_err = |message: String| StartupError::Corpus {
        path: config.corpus.clone(),
        message,
    };
    let file = std::fs::File::open(&config.corpus).map_err(|e| corpus_err(e.to_string()))?;
    let corpus = Corpus::parse(std::io::BufReader::new(file)).map_err(|e: CorpusError| corpus_err(e.to_string()))?;
    let ledger = Ledger::open(&config.ledger).map_err(|source| StartupError::Ledger {
        path: config.ledger.clone(),
        source,
    })?;
    let replayed = ledger.entries().len();
    let workflow =
        Workflow::start(corpus, config.pipeline.clone(), backend.as_ref(), ledger).map_err(StartupError::Replay)?;
    tracing::info!(
        round = workflow.current().round(),
        corpus_version = workflow.current().corpus().version_id(),
        replayed,
        "state recovered"
    );
    Ok(Arc::new(AppState {
        snapshot: RwLock::new(Arc::new(Snapshot::of(&workflow))),
        writer: Mutex::new(Writer { workflow, backend }),
        token: config.token.clone(),
    }))
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, StartupError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| StartupError::Bind { addr, source })
}

/// Serves the triage API on `listener` until ctrl-c.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> Result<(), StartupError> {
    tracing::info!(addr = %listener.local_addr().map_err(StartupError::Serve)?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(StartupError::Serve)
}

pub(crate) async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}
