//! HTTP API over question-answering sessions.
//!
//! All bodies are JSON; failures carry an [`ApiError`]. Questions are
//! long-polled up to the configured ceiling and otherwise answered with
//! 202 and a row to poll.

pub mod config;
pub mod error;
pub mod state;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sweeper_core::backends::ComponentHealth;
use sweeper_core::session::{ModelSource, SessionModel, MAX_MODELS};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use config::ServiceConfig;
pub use error::{ApiError, ErrorCode};
use state::{AppState, RowState};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Upload {
    pub filename: String,
    pub content_base64: String,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreateSessionRequest {
    /// Server-side paths or `fixture:<name>`.
    #[serde(default)]
    pub models: Vec<String>,
    /// Mesh files sent inline.
    #[serde(default)]
    pub uploads: Vec<Upload>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionCreated {
    pub session_id: String,
    pub created_at: String,
    pub backend: String,
    pub columns: Vec<String>,
    pub comparison_enabled: bool,
    pub models: Vec<SessionModel>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AskRequest {
    pub question: String,
    /// Long-poll for the finished row (default) or return 202 at once.
    #[serde(default = "yes")]
    pub wait: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingRow {
    pub row_id: String,
    pub question: String,
    pub status: String,
    pub location: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct Health {
    pub status: String,
    pub backend: String,
    pub components: Vec<ComponentHealth>,
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub format: Option<String>,
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = if state.config.cors_origins.is_empty() {
        cors.allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> =
            state.config.cors_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
        cors.allow_origin(AllowOrigin::list(origins))
    };
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}/questions", post(ask))
        .route("/sessions/{id}/table", get(table))
        .route("/sessions/{id}/rows/{row_id}", get(row))
        .route("/sessions/{id}/rows/{row_id}/trace", get(trace))
        .route("/sessions/{id}/export", get(export))
        .fallback(|| async { ApiError::not_found("no such route") })
        .layer(cors)
        .with_state(state)
}

/// Binds the configured address and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    std::fs::create_dir_all(&config.session_dir)?;
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(AppState::new(config)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn pending(id: &str, row_id: &str, question: String) -> Response {
    let location = format!("/sessions/{id}/rows/{row_id}");
    let p = PendingRow { row_id: row_id.to_string(), question, status: "pending".into(), location: location.clone() };
    let mut r = (StatusCode::ACCEPTED, Json(p)).into_response();
    if let Ok(v) = HeaderValue::from_str(&location) {
        r.headers_mut().insert(header::LOCATION, v);
    }
    r
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::not_found(format!("no session {id}"))
}

async fn healthz(State(state): State<Arc<AppState>>) -> ApiResult {
    let backend = state.config.backend.clone();
    let built = tokio::task::spawn_blocking(move || backend.build(&[]).map(|b| (b.name().to_string(), b.health())))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let (name, components) = built.map_err(|e| ApiError::new(ErrorCode::BackendUnavailable, e))?;
    let ok = components.iter().all(|c| c.status == "ok");
    let status = if ok { "ok" } else { "degraded" }.to_string();
    Ok(Json(Health { status, backend: name, components }).into_response())
}

fn save_upload(dir: &std::path::Path, upload: &Upload) -> Result<PathBuf, ApiError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(&upload.content_base64)
        .map_err(|e| ApiError::bad_request(format!("{}: invalid base64: {e}", upload.filename)))?;
    let name: String = upload
        .filename
        .rsplit(['/', '\\'])
        .next()
        .unwrap_or_default()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let digest = hex::encode(&Sha256::digest(&bytes)[..6]);
    let dir = dir.join("uploads");
    std::fs::create_dir_all(&dir).map_err(|e| ApiError::internal(e.to_string()))?;
    let path = dir.join(format!("{digest}-{name}"));
    std::fs::write(&path, bytes).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(path)
}

async fn create(State(state): State<Arc<AppState>>, payload: Result<Json<CreateSessionRequest>, JsonRejection>) -> ApiResult {
    let req = body(payload)?;
    let count = req.models.len() + req.uploads.len();
    if count > MAX_MODELS {
        return Err(ApiError::bad_request(format!("a session holds 1 to {MAX_MODELS} models, got {count}")));
    }
    let mut sources: Vec<ModelSource> = req.models.iter().map(|m| ModelSource::parse(m)).collect();
    for u in &req.uploads {
        sources.push(ModelSource::Path(save_upload(&state.config.session_dir, u)?));
    }
    let handle = state.create(sources).await?;
    let data = handle.data();
    let created = SessionCreated {
        session_id: data.id.clone(),
        created_at: data.created_at.clone(),
        backend: data.backend.clone(),
        columns: data.columns(),
        comparison_enabled: data.comparison_enabled(),
        models: data.models,
    };
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn ask(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<AskRequest>, JsonRejection>,
) -> ApiResult {
    let handle = state.get(&id).ok_or_else(|| unknown_session(&id))?;
    let req = body(payload)?;
    let row_id = handle.submit(&req.question)?;
    let limit = if req.wait { Duration::from_secs_f64(state.config.long_poll_s) } else { Duration::ZERO };
    row_response(&id, &row_id, handle.wait(&row_id, limit).await, false)
}

fn row_response(id: &str, row_id: &str, state: RowState, want_trace: bool) -> ApiResult {
    match state {
        RowState::Done(row, trace) => {
            Ok(if want_trace { Json(trace).into_response() } else { Json(row).into_response() })
        }
        RowState::Queued(question) => Ok(pending(id, row_id, question)),
        RowState::Failed(message) => Err(ApiError::internal(message)),
        RowState::Missing => Err(ApiError::not_found(format!("no row {row_id} in session {id}"))),
    }
}

async fn table(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    if let Some(h) = state.get(&id) {
        return Ok(Json(h.table()).into_response());
    }
    let data = state.data(&id).ok_or_else(|| unknown_session(&id))?;
    Ok(Json(data.table(&[])).into_response())
}

async fn row_or_trace(state: &AppState, id: &str, row_id: &str, want_trace: bool) -> ApiResult {
    if let Some(h) = state.get(id) {
        return row_response(id, row_id, h.row_state(row_id), want_trace);
    }
    let data = state.data(id).ok_or_else(|| unknown_session(id))?;
    let found = data.row(row_id).cloned().zip(data.trace(row_id).cloned());
    let s = match found {
        Some((r, t)) => RowState::Done(r, t),
        None => RowState::Missing,
    };
    row_response(id, row_id, s, want_trace)
}

async fn row(State(state): State<Arc<AppState>>, Path((id, row_id)): Path<(String, String)>) -> ApiResult {
    row_or_trace(&state, &id, &row_id, false).await
}

async fn trace(State(state): State<Arc<AppState>>, Path((id, row_id)): Path<(String, String)>) -> ApiResult {
    row_or_trace(&state, &id, &row_id, true).await
}

async fn export(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let data = state.data(&id).ok_or_else(|| unknown_session(&id))?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(([(header::CONTENT_TYPE, "application/json")], data.export_json()).into_response()),
        "csv" => Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], data.export_csv()).into_response()),
        other => Err(ApiError::bad_request(format!("unknown export format {other}; use json or csv"))),
    }
}
