use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tagdistill_core::corpus::write_annotations;
use tagdistill_core::scenario::ClinicalScenario;
use tower_http::services::ServeDir;

use crate::error::ReviewError;
use crate::state::{ExportKind, ReviewService};
use crate::task::{TaskSpec, TaskStatus, Verdict};

const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 1000;

/// One scenario's review queue.
#[derive(Debug, Clone)]
pub struct ScenarioSource {
    pub scenario: ClinicalScenario,
    pub tasks: Vec<TaskSpec>,
    /// Split manifest consulted by `test` and `in_context` exports; read at
    /// request time so splits built after startup are picked up.
    pub splits_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ReviewConfig {
    pub addr: SocketAddr,
    pub log_path: PathBuf,
    pub scenarios: Vec<ScenarioSource>,
    /// Directory of static UI assets served outside `/api`.
    pub static_dir: Option<PathBuf>,
}

impl ReviewService {
    pub fn from_sources(
        sources: Vec<ScenarioSource>,
        log_path: impl AsRef<std::path::Path>,
    ) -> Result<Self, ReviewError> {
        Self::open(
            sources
                .into_iter()
                .map(|s| (s.scenario, s.tasks, s.splits_path))
                .collect(),
            log_path,
        )
    }
}

struct ApiError(ReviewError);

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let e = self.0;
        let status = match &e {
            ReviewError::UnknownTask(_) | ReviewError::UnknownScenario(_) => StatusCode::NOT_FOUND,
            ReviewError::InvalidSegments { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ReviewError::NothingValidated(_) | ReviewError::NoSplits(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "error_kind": e.kind(), "detail": e.to_string() });
        if let ReviewError::InvalidSegments { violations } = &e {
            body["violations"] = serde_json::to_value(violations).expect("violations serialize");
        }
        if status.is_server_error() {
            log::error!("{e}");
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Svc = State<Arc<ReviewService>>;

fn query(q: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult<HashMap<String, String>> {
    q.map(|Query(m)| m)
        .map_err(|e| ApiError(ReviewError::InvalidRequest(e.body_text())))
}

fn number(q: &HashMap<String, String>, key: &str, default: usize) -> ApiResult<usize> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| {
            ApiError(ReviewError::InvalidRequest(format!(
                "{key} must be a nonnegative integer, got {v:?}"
            )))
        }),
    }
}

async fn scenarios(State(svc): Svc) -> impl IntoResponse {
    Json(svc.read().scenario_summaries())
}

async fn tasks(
    State(svc): Svc,
    Path(id): Path<String>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    let status = match q.get("status") {
        None => None,
        Some(s) => Some(TaskStatus::parse(s).ok_or_else(|| {
            ReviewError::InvalidRequest(format!("status must be pending, accepted or corrected, got {s:?}"))
        })?),
    };
    let limit = number(&q, "limit", DEFAULT_PAGE)?.min(MAX_PAGE);
    let offset = number(&q, "offset", 0)?;
    Ok(Json(svc.read().tasks(&id, status, offset, limit)?))
}

async fn task(State(svc): Svc, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.read().task(&id)?.clone()))
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn verdict(State(svc): Svc, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let verdict: Verdict =
        serde_json::from_slice(&body).map_err(|e| ReviewError::InvalidRequest(format!("verdict body: {e}")))?;
    // the fsync in submit blocks, keep it off the async workers
    let task = tokio::task::spawn_blocking(move || svc.submit(&id, &verdict, now_millis()))
        .await
        .map_err(|e| ReviewError::InvalidRequest(format!("verdict task failed: {e}")))??;
    Ok(Json(task))
}

async fn progress(State(svc): Svc, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.read().progress(&id)?))
}

async fn export(
    State(svc): Svc,
    Path(id): Path<String>,
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    let kind = match q.get("kind").map(String::as_str) {
        None => ExportKind::All,
        Some(k) => ExportKind::parse(k)
            .ok_or_else(|| ReviewError::InvalidRequest(format!("kind must be test, in_context or all, got {k:?}")))?,
    };
    let state = svc.read();
    let manifest = match kind {
        ExportKind::All => None,
        _ => state.load_splits(&id)?,
    };
    let annotations = state.export(&id, kind, manifest.as_ref())?;
    let mut body = Vec::new();
    write_annotations(&mut body, &annotations).expect("writing to memory");
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

async fn api_not_found() -> ApiError {
    ApiError(ReviewError::InvalidRequest("no such API route".into()))
}

/// The HTTP API, plus static files from `static_dir` when given.
pub fn router(service: Arc<ReviewService>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/scenarios", get(scenarios))
        .route("/api/scenarios/{id}/tasks", get(tasks))
        .route("/api/scenarios/{id}/progress", get(progress))
        .route("/api/scenarios/{id}/export", get(export))
        .route("/api/tasks/{task_id}", get(task))
        .route("/api/tasks/{task_id}/verdict", post(verdict))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// A bound, not yet serving, review server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub service: Arc<ReviewService>,
    listener: tokio::net::TcpListener,
    router: Router,
}

impl ServerHandle {
    pub async fn run(self) -> std::io::Result<()> {
        axum::serve(self.listener, self.router).await
    }

    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        axum::serve(self.listener, self.router)
            .with_graceful_shutdown(shutdown)
            .await
    }
}

/// Replay the log, then bind the listening socket.
pub async fn bind(config: ReviewConfig) -> Result<ServerHandle, ReviewError> {
    let service = Arc::new(ReviewService::from_sources(config.scenarios, &config.log_path)?);
    let listener = tokio::net::TcpListener::bind(config.addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ReviewError::PortInUse(config.addr.port())
        } else {
            ReviewError::Io {
                path: PathBuf::from(config.addr.to_string()),
                source: e,
            }
        }
    })?;
    let addr = listener
        .local_addr()
        .map_err(ReviewError::io(config.addr.to_string()))?;
    let router = router(service.clone(), config.static_dir);
    Ok(ServerHandle {
        addr,
        service,
        listener,
        router,
    })
}
