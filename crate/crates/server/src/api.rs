use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use concord_core::eval::QueueEntry;
use concord_core::triage::{RoundState, VerdictEntry, VerdictRequest};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{ApiError, AppState};

/// Turns shown either side of each question in a pair detail.
const CONTEXT_RADIUS: usize = 2;

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/rounds", get(list_rounds))
        .route("/rounds/next", post(next_round))
        .route("/rounds/{n}", get(round_report))
        .route("/rounds/{n}/metrics", get(round_metrics))
        .route("/rounds/{n}/disagreements", get(round_disagreements))
        .route("/pairs/{pair_id}", get(pair_detail))
        .route("/verdicts", post(post_verdict))
        .route("/corpus/version", get(corpus_version))
        .route("/session", get(session))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/health", get(health))
        .fallback(|| async { ApiError::not_found("not_found", "no such endpoint") });
    Router::new().nest("/api", api).with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(expected) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(expected.as_str()) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or invalid bearer token",
            )
            .into_response();
        }
    }
    next.run(request).await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.snapshot();
    Json(json!({"ok": true, "round": snap.current().round()}))
}

fn parse_round(raw: &str) -> Result<u32, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("round must be a positive integer, got {raw:?}")))
}

fn with_round<T>(state: &AppState, n: Option<u32>, f: impl FnOnce(&RoundState) -> T) -> Result<T, ApiError> {
    let snap = state.snapshot();
    let round = match n {
        None => Some(snap.current()),
        Some(n) => snap.round(n),
    };
    round
        .map(f)
        .ok_or_else(|| ApiError::not_found("unknown_round", format!("round {} does not exist", n.unwrap_or(0))))
}

async fn list_rounds(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.snapshot();
    let rounds: Vec<_> = snap.rounds.iter().map(RoundState::report).collect();
    Json(json!({"current": snap.current().round(), "rounds": rounds}))
}

async fn round_report(State(state): State<Arc<AppState>>, Path(n): Path<String>) -> Result<Response, ApiError> {
    let n = parse_round(&n)?;
    with_round(&state, Some(n), |r| Json(r.report()).into_response())
}

async fn round_metrics(State(state): State<Arc<AppState>>, Path(n): Path<String>) -> Result<Response, ApiError> {
    let n = parse_round(&n)?;
    with_round(&state, Some(n), |r| {
        Json(json!({"round": r.round(), "metrics": r.metrics(), "tallies": r.tallies()})).into_response()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StatusFilter {
    All,
    Open,
    Closed,
}

#[derive(Debug, Deserialize)]
struct DisagreementQuery {
    status: Option<String>,
}

#[derive(Debug, Serialize)]
struct QueueItem {
    rank: usize,
    status: &'static str,
    #[serde(flatten)]
    entry: QueueEntry,
    confidence: f64,
    verdict: Option<VerdictEntry>,
}

async fn round_disagreements(
    State(state): State<Arc<AppState>>,
    Path(n): Path<String>,
    Query(query): Query<DisagreementQuery>,
) -> Result<Response, ApiError> {
    let n = parse_round(&n)?;
    let filter = match query.status.as_deref() {
        None | Some("all") => StatusFilter::All,
        Some("open") => StatusFilter::Open,
        Some("closed") => StatusFilter::Closed,
        Some(other) => {
            return Err(ApiError::bad_request(format!(
                "status must be open, closed or all, got {other:?}"
            )))
        }
    };
    with_round(&state, Some(n), |r| {
        let items: Vec<QueueItem> = r
            .disagreements()
            .iter()
            .enumerate()
            .filter_map(|(rank, d)| {
                let verdict = r.verdict(d.pair_id()).cloned();
                let open = verdict.is_none();
                let keep = match filter {
                    StatusFilter::All => true,
                    StatusFilter::Open => open,
                    StatusFilter::Closed => !open,
                };
                keep.then(|| QueueItem {
                    rank,
                    status: if open { "open" } else { "closed" },
                    entry: d.to_entry(),
                    confidence: d.confidence(),
                    verdict,
                })
            })
            .collect();
        Json(json!({
            "round": r.round(),
            "total": r.total(),
            "open": r.open(),
            "cursor": r.cursor(),
            "items": items,
        }))
        .into_response()
    })
}

#[derive(Debug, Deserialize)]
struct PairQuery {
    round: Option<String>,
}

async fn pair_detail(
    State(state): State<Arc<AppState>>,
    Path(pair_id): Path<String>,
    Query(query): Query<PairQuery>,
) -> Result<Response, ApiError> {
    let n = query.round.as_deref().map(parse_round).transpose()?;
    with_round(&state, n, |r| {
        let corpus = r.corpus();
        let Some(pair) = r.dataset().get(&pair_id) else {
            return ApiError::not_found(
                "unknown_pair",
                format!("pair {pair_id:?} is not in round {}", r.round()),
            )
            .into_response();
        };
        let side = |turn_id: &str| {
            json!({
                "turn": corpus.turn(turn_id),
                "label": corpus.label_of(turn_id).map(|l| l.as_str()),
                "context": corpus.context(turn_id, CONTEXT_RADIUS).unwrap_or(&[]),
            })
        };
        let disagreement = r
            .disagreement(&pair_id)
            .map(|d| json!({"predicted": u8::from(d.predicted), "score": d.score, "confidence": d.confidence()}));
        Json(json!({
            "round": r.round(),
            "pair_id": pair.pair_id,
            "gold": u8::from(pair.gold),
            "split": r.dataset().split_of(&pair_id).map(|s| s.as_str()),
            "q1": side(&pair.q1_id),
            "q2": side(&pair.q2_id),
            "disagreement": disagreement,
            "verdict": r.verdict(&pair_id),
        }))
        .into_response()
    })
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn idempotency_header(headers: &HeaderMap) -> Result<Option<String>, ApiError> {
    headers
        .get("idempotency-key")
        .map(|v| {
            v.to_str()
                .map(str::to_string)
                .map_err(|_| ApiError::bad_request("Idempotency-Key must be ASCII"))
        })
        .transpose()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn post_verdict(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let mut request: VerdictRequest = parse_body(&body)?;
    if let Some(key) = idempotency_header(&headers)? {
        request.idempotency_key = Some(key);
    }
    if request.actor.trim().is_empty() {
        return Err(ApiError::bad_request("actor is empty"));
    }
    let entry = blocking(move || Ok(state.write(|w| w.workflow.submit_verdict(request))?)).await?;
    Ok((StatusCode::CREATED, Json(entry)).into_response())
}

#[derive(Debug, Deserialize)]
struct NextRoundRequest {
    actor: String,
    #[serde(default)]
    idempotency_key: Option<String>,
}

async fn next_round(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let mut request: NextRoundRequest = parse_body(&body)?;
    if let Some(key) = idempotency_header(&headers)? {
        request.idempotency_key = Some(key);
    }
    if request.actor.trim().is_empty() {
        return Err(ApiError::bad_request("actor is empty"));
    }
    let report = blocking(move || {
        Ok(state.write(|w| {
            let round = w
                .workflow
                .next_round(&request.actor, request.idempotency_key, w.backend.as_ref())?;
            Ok(round.report())
        })?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(report)).into_response())
}

async fn corpus_version(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.snapshot();
    let corpus = snap.current().corpus();
    Json(json!({
        "round": snap.current().round(),
        "version_id": corpus.version_id(),
        "parent_version": corpus.parent_version(),
        "n_questions": corpus.questions().len(),
        "ledger_entries": snap.ledger_entries,
    }))
}

async fn session(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.snapshot();
    let r = snap.current();
    let next = r.disagreements().get(r.cursor()).map(|d| d.pair_id().to_string());
    Json(json!({
        "round": r.round(),
        "cursor": r.cursor(),
        "queue_length": r.total(),
        "open": r.open(),
        "next_pair_id": next,
    }))
}
