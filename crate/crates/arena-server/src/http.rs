//! JSON-over-HTTP routes.
//!
//! Errors are `{"error": {"code": ..., "message": ...}}` with a status that
//! matches the code.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use policy_gateway::Observation;
use ranking_core::RankingMethod;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::ArenaError;
use crate::service::Arena;
use crate::types::*;

impl ArenaError {
    pub fn status(&self) -> StatusCode {
        match self {
            ArenaError::PolicyNotFound(_) | ArenaError::SessionNotFound(_) | ArenaError::UnknownEvaluator(_) => {
                StatusCode::NOT_FOUND
            }
            ArenaError::InvalidEndpoint(_) => StatusCode::BAD_REQUEST,
            ArenaError::EndpointUnreachable(_) | ArenaError::SchemaNonconformance(_) | ArenaError::Validation(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ArenaError::InsufficientPolicies { .. }
            | ArenaError::PolicyInactive(_)
            | ArenaError::SessionCompleted(_)
            | ArenaError::InsufficientData(_) => StatusCode::CONFLICT,
            ArenaError::InsufficientCredit { .. } => StatusCode::PAYMENT_REQUIRED,
            ArenaError::PolicyNotOwned(_) => StatusCode::FORBIDDEN,
            ArenaError::TooManyOpenSessions { .. } => StatusCode::TOO_MANY_REQUESTS,
            ArenaError::SessionExpired(_) | ArenaError::SessionCancelled(_) => StatusCode::GONE,
            ArenaError::Upstream(_) => StatusCode::BAD_GATEWAY,
            ArenaError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ArenaError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ArenaError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ArenaError::invalid(format!("malformed body: {e}")))
}

async fn register_policy(State(arena): State<Arc<Arena>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let descriptor: PolicyDescriptor = parse_body(&body)?;
    let entry = arena.register_policy(descriptor).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn list_policies(State(arena): State<Arc<Arena>>) -> ApiResult<Json<Vec<PolicyEntry>>> {
    Ok(Json(arena.policies()?))
}

#[derive(Deserialize)]
struct StatusUpdate {
    status: String,
}

async fn set_policy_status(
    State(arena): State<Arc<Arena>>,
    Path(policy_id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<PolicyEntry>> {
    let update: StatusUpdate = parse_body(&body)?;
    let status: PolicyStatus = update.status.parse()?;
    Ok(Json(arena.set_policy_status(&policy_id, status)?))
}

async fn register_evaluator(State(arena): State<Arc<Arena>>, body: Bytes) -> ApiResult<Json<CreditView>> {
    let registration: EvaluatorRegistration = parse_body(&body)?;
    Ok(Json(CreditView::from(&arena.register_evaluator(registration)?)))
}

async fn credits(State(arena): State<Arc<Arena>>, Path(evaluator_id): Path<String>) -> ApiResult<Json<CreditView>> {
    Ok(Json(CreditView::from(&arena.credits(&evaluator_id)?)))
}

async fn request_session(State(arena): State<Arc<Arena>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: SessionRequest = parse_body(&body)?;
    let view = arena.request_session(&request.evaluator_id, request.policy_id.as_deref())?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(arena): State<Arc<Arena>>, Path(session_id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(arena.session_view(&session_id)?))
}

async fn submit_feedback(
    State(arena): State<Arc<Arena>>,
    Path(session_id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<FeedbackAck>> {
    let feedback: FeedbackSubmission = parse_body(&body)?;
    Ok(Json(arena.submit_feedback(&session_id, &feedback)?))
}

async fn cancel_expired(State(arena): State<Arc<Arena>>) -> ApiResult<Json<serde_json::Value>> {
    let cancelled = arena.cancel_expired_sessions()?;
    Ok(Json(json!({ "cancelled": cancelled })))
}

async fn leaderboard(
    State(arena): State<Arc<Arena>>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Json<LeaderboardSnapshot>> {
    let method: RankingMethod = match query.get("method") {
        Some(m) => m.parse().map_err(ArenaError::invalid)?,
        None => RankingMethod::TaskEm,
    };
    let filter: LeaderboardFilter = match query.get("filter") {
        Some(f) => f.parse()?,
        None => LeaderboardFilter::All,
    };
    let arena = arena.clone();
    // EM fits are CPU-bound; keep them off the async workers.
    let snapshot = tokio::task::spawn_blocking(move || arena.leaderboard(method, filter))
        .await
        .map_err(|e| ArenaError::Storage(e.to_string()))??;
    Ok(Json(snapshot))
}

fn export_range(query: &HashMap<String, String>) -> ApiResult<ExportRange> {
    let bound = |key: &str| -> ApiResult<Option<i64>> {
        query
            .get(key)
            .map(|v| v.parse::<i64>().map_err(|_| ArenaError::invalid(format!("{key} must be an integer"))))
            .transpose()
    };
    Ok(ExportRange {
        from: bound("from")?,
        to: bound("to")?,
    })
}

/// `GET /export` returns the record CSV; `GET /export/sidecar` the JSON-lines
/// sidecar for the same range.
async fn export(State(arena): State<Arc<Arena>>, Query(query): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let mut csv = Vec::new();
    arena.export(export_range(&query)?, &mut csv, std::io::sink())?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn export_sidecar(
    State(arena): State<Arc<Arena>>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let mut lines = Vec::new();
    arena.export(export_range(&query)?, std::io::sink(), &mut lines)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], lines).into_response())
}

async fn relay_act(State(arena): State<Arc<Arena>>, Path(token): Path<String>, body: Bytes) -> ApiResult<Response> {
    let obs: Observation = parse_body(&body)?;
    if let Err(problems) = obs.validate() {
        return Err(ArenaError::Validation(problems));
    }
    Ok(Json(arena.relay_act(&token, &obs).await?).into_response())
}

pub fn router(arena: Arc<Arena>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/policies", post(register_policy).get(list_policies))
        .route("/policies/{id}/status", patch(set_policy_status))
        .route("/evaluators", post(register_evaluator))
        .route("/evaluators/{id}", get(credits))
        .route("/sessions", post(request_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/admin/cancel-expired", post(cancel_expired))
        .route("/leaderboard", get(leaderboard))
        .route("/export", get(export))
        .route("/export/sidecar", get(export_sidecar))
        .route("/proxy/{token}/act", post(relay_act))
        .with_state(arena)
}
