//! HTTP front end: `POST /v1/recommendations` and `GET /v1/health`.
//!
//! Indexes and the embedding provider are loaded once and shared read-only.
//! Each request carries the whole workflow as BPMN XML, which is parsed and
//! matched on the blocking pool.

use std::fs::OpenOptions;
use std::future::Future;
use std::io::{LineWriter, Write as _};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use slicematch::recommend::DEFAULT_K;
use slicematch::{
    load_index, parse_bpmn, recommend, EmbedError, EmbeddingProvider, HashEmbedder, Index, IndexError, Mode,
    Recommendation, RecommendError, RecommendationQuery, RemoteEmbedder,
};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::api::{
    new_request_id, ErrorBody, ErrorDetail, HealthBody, IndexSummary, RecommendRequestBody, RecommendResponseBody,
    RequestLogEntry,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot load index {path}: {source}")]
    Index { path: PathBuf, source: IndexError },
    #[error("no index configured")]
    NoIndex,
    #[error("two indexes were given for mode {0}")]
    DuplicateMode(Mode),
    #[error("indexes disagree on the embedder ({0} vs {1})")]
    MixedEmbedders(String, String),
    #[error("embedder `{provider}` cannot serve an index built with `{index}`")]
    ProviderMismatch { provider: String, index: String },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Index { source, .. } => source.code(),
            ServiceError::NoIndex => "no_index",
            ServiceError::DuplicateMode(_) => "duplicate_mode",
            ServiceError::MixedEmbedders(..) | ServiceError::ProviderMismatch { .. } => "embedder_mismatch",
            ServiceError::Io(_) => "io_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub index_paths: Vec<PathBuf>,
    pub bind_addr: String,
    pub provider_url: Option<String>,
    pub k_default: usize,
    pub request_log: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            index_paths: Vec::new(),
            bind_addr: "127.0.0.1:8080".into(),
            provider_url: None,
            k_default: DEFAULT_K,
            request_log: None,
        }
    }
}

pub struct AppState {
    indexes: Vec<Index>,
    provider: Arc<dyn EmbeddingProvider>,
    k_default: usize,
    log: Option<Mutex<LineWriter<std::fs::File>>>,
}

impl AppState {
    /// At most one index per mode, all built with `provider`'s embedder.
    pub fn new(
        indexes: Vec<Index>,
        provider: Arc<dyn EmbeddingProvider>,
        k_default: usize,
    ) -> Result<Self, ServiceError> {
        let Some(first) = indexes.first() else {
            return Err(ServiceError::NoIndex);
        };
        for (i, idx) in indexes.iter().enumerate() {
            if indexes[..i].iter().any(|o| o.meta.mode == idx.meta.mode) {
                return Err(ServiceError::DuplicateMode(idx.meta.mode));
            }
            if idx.meta.embedder != first.meta.embedder {
                return Err(ServiceError::MixedEmbedders(
                    first.meta.embedder.id.clone(),
                    idx.meta.embedder.id.clone(),
                ));
            }
        }
        if provider.descriptor() != &first.meta.embedder {
            return Err(ServiceError::ProviderMismatch {
                provider: format!("{}/{}", provider.descriptor().id, provider.descriptor().dimension),
                index: format!("{}/{}", first.meta.embedder.id, first.meta.embedder.dimension),
            });
        }
        Ok(AppState {
            indexes,
            provider,
            k_default: k_default.max(1),
            log: None,
        })
    }

    /// Loads the configured indexes and picks the provider they were built with.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let indexes = config
            .index_paths
            .iter()
            .map(|p| {
                load_index::<f64>(p).map_err(|source| ServiceError::Index {
                    path: p.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let first = indexes.first().ok_or(ServiceError::NoIndex)?;
        let dimension = first.meta.embedder.dimension;
        let provider: Arc<dyn EmbeddingProvider> = match &config.provider_url {
            Some(url) => Arc::new(RemoteEmbedder::new(url.clone(), dimension)),
            None => Arc::new(HashEmbedder::new(dimension)),
        };
        let mut state = AppState::new(indexes, provider, config.k_default)?;
        if let Some(path) = &config.request_log {
            state = state.with_request_log(path)?;
        }
        Ok(state)
    }

    /// Appends one JSON line per request to `path`.
    pub fn with_request_log(mut self, path: &Path) -> Result<Self, ServiceError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(Mutex::new(LineWriter::new(file)));
        Ok(self)
    }

    pub fn index_for(&self, mode: Mode) -> Option<&Index> {
        self.indexes.iter().find(|i| i.meta.mode == mode)
    }

    fn write_log(&self, entry: &RequestLogEntry) {
        let Some(log) = &self.log else { return };
        let line = serde_json::to_string(entry).expect("log entries serialize");
        let mut w = log.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = writeln!(w, "{line}") {
            tracing::warn!(error = %e, "request log write failed");
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        let status = match &e {
            RecommendError::UnknownNode(_) => StatusCode::NOT_FOUND,
            RecommendError::NoSliceEndsAtTarget(_) | RecommendError::ModeMismatch { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            RecommendError::InvalidK => StatusCode::BAD_REQUEST,
            RecommendError::Embed(EmbedError::ProviderUnavailable(_)) => StatusCode::SERVICE_UNAVAILABLE,
            RecommendError::Embed(EmbedError::DimensionMismatch { .. }) => StatusCode::BAD_GATEWAY,
            RecommendError::DescriptorMismatch { .. } | RecommendError::EmptyIndex => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

/// Parses, validates and answers one request body. The user id is returned
/// whenever the body could be read.
pub fn answer(state: &AppState, body: &[u8]) -> (Option<String>, Result<Vec<Recommendation>, ApiError>) {
    match serde_json::from_slice::<RecommendRequestBody>(body) {
        Ok(req) => {
            let user = Some(req.user_id.clone());
            (user, answer_request(state, &req))
        }
        Err(e) => (None, Err(ApiError::invalid(format!("bad request body: {e}")))),
    }
}

pub fn answer_request(state: &AppState, req: &RecommendRequestBody) -> Result<Vec<Recommendation>, ApiError> {
    if req.bpmn_xml.trim().is_empty() {
        return Err(ApiError::invalid("bpmn_xml is empty"));
    }
    if req.task_id.is_empty() {
        return Err(ApiError::invalid("task_id is empty"));
    }
    let k = req.k.unwrap_or(state.k_default);
    if k == 0 {
        return Err(ApiError::invalid("k must be at least 1"));
    }
    let mode = req.mode.unwrap_or_default();
    let index = state.index_for(mode).ok_or_else(|| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "mode_mismatch",
            format!("no index is loaded for mode {mode}"),
        )
    })?;
    let graphs = parse_bpmn(req.bpmn_xml.as_bytes())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_bpmn", e.to_string()))?;
    let graph = graphs.iter().find(|g| g.contains(&req.task_id)).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "task_not_found",
            format!("no element with id `{}` in the workflow", req.task_id),
        )
    })?;
    let query = RecommendationQuery::new(graph, &req.task_id)
        .k(k)
        .filtered(req.filtered.unwrap_or(false))
        .mode(mode);
    Ok(recommend(&query, index, state.provider.as_ref())?)
}

fn error_response(err: &ApiError, request_id: String) -> Response {
    let body = ErrorBody {
        error: ErrorDetail {
            code: err.code.to_string(),
            message: err.message.clone(),
        },
        request_id,
    };
    (err.status, Json(body)).into_response()
}

async fn recommend_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let started = Instant::now();
    let request_id = new_request_id();
    let worker_state = state.clone();
    let (user_id, outcome) = tokio::task::spawn_blocking(move || answer(&worker_state, &body))
        .await
        .unwrap_or_else(|e| {
            tracing::error!(error = %e, "recommendation worker failed");
            (None, Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", "internal error")))
        });
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;
    let (response, status, code) = match outcome {
        Ok(recommendations) => {
            let body = RecommendResponseBody {
                recommendations,
                request_id: request_id.clone(),
                latency_ms,
            };
            (Json(body).into_response(), StatusCode::OK, None)
        }
        Err(e) => (error_response(&e, request_id.clone()), e.status, Some(e.code.to_string())),
    };
    state.write_log(&RequestLogEntry {
        request_id,
        user_id,
        latency_ms,
        status: status.as_u16(),
        code,
    });
    response
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Json<HealthBody> {
    Json(HealthBody {
        status: "ok".into(),
        indexes: state
            .indexes
            .iter()
            .map(|i| IndexSummary {
                meta: i.meta.clone(),
                records: i.len(),
            })
            .collect(),
    })
}

async fn not_found() -> Response {
    let err = ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route");
    error_response(&err, new_request_id())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/recommendations", post(recommend_handler))
        .route("/v1/health", get(health_handler))
        .fallback(not_found)
        .with_state(state)
}

/// A service bound to a socket and running on the current runtime.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(self) -> std::io::Result<()> {
        let _ = self.shutdown.send(());
        self.handle.await.unwrap_or_else(|e| Err(std::io::Error::other(e)))
    }
}

pub async fn start(state: Arc<AppState>, bind_addr: &str) -> Result<RunningService, ServiceError> {
    let listener = TcpListener::bind(bind_addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state);
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningService {
        addr,
        shutdown: tx,
        handle,
    })
}

/// Loads everything named in `config`, then serves until `shutdown` resolves.
pub async fn serve(config: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::from_config(&config)?);
    for i in &state.indexes {
        tracing::info!(mode = %i.meta.mode, records = i.len(), n = i.meta.slice_length, "index loaded");
    }
    let listener = TcpListener::bind(&config.bind_addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
