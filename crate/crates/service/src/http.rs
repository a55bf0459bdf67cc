//! HTTP front end. Writes run on the blocking pool behind the single writer;
//! reads clone the current snapshot and never wait for a write.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use proxigraph_core::graph::TimeWindow;
use proxigraph_core::wire::InfectionStatus;
use proxigraph_core::AssociateHash;
use serde::Deserialize;
use tower_http::services::{ServeDir, ServeFile};

use crate::{ServiceError, TraceService};

pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownAssociate(_) | ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Graph(proxigraph_core::graph::GraphError::UnknownAssociate(_)) => StatusCode::NOT_FOUND,
            ServiceError::InvalidParameter { .. } | ServiceError::Graph(_) | ServiceError::MalformedBody(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = serde_json::json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

/// The API router; with `console` set, static files from that directory are
/// served for every other path.
pub fn router(service: Arc<TraceService>, console: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/v1/events", post(post_events))
        .route("/v1/infections", post(post_infection))
        .route("/v1/trace", get(get_trace))
        .route("/v1/risk", get(get_risk))
        .route("/v1/clusters", get(get_clusters))
        .route("/v1/graph", get(get_graph))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(service);
    match console {
        Some(dir) => {
            let files = ServeDir::new(dir).append_index_html_on_directories(true).fallback(ServeFile::new(dir.join("index.html")));
            api.fallback_service(files)
        }
        None => api.fallback(|uri: axum::http::Uri| async move { ServiceError::NotFound(uri.path().to_string()) }),
    }
}

type Params = Query<HashMap<String, String>>;

fn parse<T: FromStr>(params: &HashMap<String, String>, name: &'static str) -> Result<Option<T>, ServiceError>
where
    T::Err: std::fmt::Display,
{
    params
        .get(name)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| ServiceError::invalid(name, format!("{v:?}: {e}"))))
        .transpose()
}

fn window(params: &HashMap<String, String>) -> Result<Option<TimeWindow>, ServiceError> {
    let from = parse::<i64>(params, "from")?;
    let to = parse::<i64>(params, "to")?;
    if from.is_none() && to.is_none() {
        return Ok(None);
    }
    Ok(Some(TimeWindow::new(from.unwrap_or(i64::MIN), to.unwrap_or(i64::MAX))?))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?
}

async fn post_events(State(service): State<Arc<TraceService>>, body: Bytes) -> Result<Response, ServiceError> {
    let batch: Vec<serde_json::Value> =
        serde_json::from_slice(&body).map_err(|e| ServiceError::MalformedBody(format!("expected a JSON array: {e}")))?;
    let summary = blocking(move || service.ingest_batch(batch)).await?;
    Ok(Json(summary).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InfectionRequest {
    associate_hash: AssociateHash,
    report_ms: i64,
    #[serde(default)]
    status: InfectionStatus,
}

async fn post_infection(State(service): State<Arc<TraceService>>, body: Bytes) -> Result<Response, ServiceError> {
    let req: InfectionRequest = serde_json::from_slice(&body).map_err(|e| ServiceError::MalformedBody(e.to_string()))?;
    let summary = blocking(move || service.report_infection(req.associate_hash, req.report_ms, req.status)).await?;
    Ok(Json(summary).into_response())
}

async fn get_trace(State(service): State<Arc<TraceService>>, Query(params): Params) -> Result<Response, ServiceError> {
    let source: AssociateHash = parse(&params, "source")?.ok_or_else(|| ServiceError::invalid("source", "required"))?;
    let levels = parse::<u32>(&params, "levels")?;
    let window = window(&params)?;
    Ok(Json(service.snapshot().trace(&source, levels, window)?).into_response())
}

async fn get_risk(State(service): State<Arc<TraceService>>) -> Response {
    Json(service.snapshot().risk_view()).into_response()
}

async fn get_clusters(State(service): State<Arc<TraceService>>, Query(params): Params) -> Result<Response, ServiceError> {
    let min_weight = parse::<f64>(&params, "min_weight")?.unwrap_or(0.0);
    let min_size = parse::<usize>(&params, "min_size")?.unwrap_or(2);
    Ok(Json(service.snapshot().clusters(min_weight, min_size)?).into_response())
}

async fn get_graph(State(service): State<Arc<TraceService>>, Query(params): Params) -> Result<Response, ServiceError> {
    let window = window(&params)?;
    Ok(Json(service.snapshot().graph_view(window)).into_response())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()).expect("signal handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}

/// Bind and serve until SIGINT or SIGTERM, then write a final manifest.
pub async fn serve(service: Arc<TraceService>, addr: std::net::SocketAddr, console: Option<&Path>) -> Result<(), ServiceError> {
    let app = router(service.clone(), console);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(address = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    service.checkpoint()?;
    Ok(())
}
