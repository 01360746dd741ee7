//! A small `/v1` classifier service backed by token overlap.
//!
//! It speaks the same protocol as a real model service, which makes it a
//! stand-in for end-to-end runs of the remote backend. Training reads the
//! TSV slices it is pointed at and does nothing else.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use concord_core::classifier::wire::{
    HealthResponse, PredictRequest, PredictResponse, TrainRequest, TrainResponse, WirePrediction,
};
use concord_core::classifier::{lexical_score, DecisionThreshold, JobState, JobStatus};
use concord_core::pairs::import_pairs;
use serde_json::json;
use url::Url;

#[derive(Debug, Default)]
struct Reference {
    threshold: DecisionThreshold,
    next_job: AtomicU64,
    jobs: Mutex<HashMap<String, JobState>>,
}

type Shared = Arc<Reference>;

pub fn reference_router(threshold: DecisionThreshold) -> Router {
    let state = Arc::new(Reference {
        threshold,
        ..Reference::default()
    });
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/train", post(train))
        .route("/v1/train/{job_id}", get(job))
        .route("/v1/predict", post(predict))
        .with_state(state)
}

/// Serves the reference classifier on `listener` until ctrl-c.
pub async fn serve_reference(threshold: DecisionThreshold, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "reference classifier listening");
    axum::serve(listener, reference_router(threshold))
        .with_graceful_shutdown(crate::shutdown_signal())
        .await
}

async fn health() -> Json<HealthResponse> {
    Json(HealthResponse {
        ok: true,
        model: "lexical-jaccard".into(),
    })
}

fn read_slice(uri: &str) -> Result<usize, String> {
    let path = Url::parse(uri)
        .ok()
        .filter(|u| u.scheme() == "file")
        .and_then(|u| u.to_file_path().ok())
        .ok_or_else(|| format!("{uri:?} is not a file URI"))?;
    let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    import_pairs(std::io::BufReader::new(file))
        .map(|d| d.len())
        .map_err(|e| format!("{}: {e}", path.display()))
}

async fn train(
    State(state): State<Shared>,
    Json(request): Json<TrainRequest>,
) -> Result<Json<TrainResponse>, (StatusCode, Json<serde_json::Value>)> {
    let outcome = read_slice(&request.train_uri).and_then(|n| Ok((n, read_slice(&request.val_uri)?)));
    let job_id = format!("job-{}", state.next_job.fetch_add(1, Ordering::Relaxed) + 1);
    let job = match outcome {
        Ok((train, val)) => JobState {
            status: JobStatus::Succeeded,
            detail: format!("read {train} train and {val} val pairs"),
        },
        Err(message) => return Err((StatusCode::BAD_REQUEST, Json(json!({"error": message})))),
    };
    state.jobs.lock().expect("jobs lock").insert(job_id.clone(), job);
    Ok(Json(TrainResponse { job_id }))
}

async fn job(State(state): State<Shared>, Path(job_id): Path<String>) -> Result<Json<JobState>, StatusCode> {
    state
        .jobs
        .lock()
        .expect("jobs lock")
        .get(&job_id)
        .cloned()
        .map(Json)
        .ok_or(StatusCode::NOT_FOUND)
}

async fn predict(State(state): State<Shared>, Json(request): Json<PredictRequest>) -> Json<PredictResponse> {
    let predictions = request
        .pairs
        .into_iter()
        .map(|p| {
            let score = lexical_score(&p.text1, &p.text2);
            WirePrediction {
                pair_id: p.pair_id,
                label: u8::from(state.threshold.decide(score)),
                score,
            }
        })
        .collect();
    Json(PredictResponse { predictions })
}
