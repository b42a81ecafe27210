use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use super::{handle_search, handle_trajectory, handle_translate, Registry};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub max_body_bytes: usize,
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Range(_) => (StatusCode::UNPROCESSABLE_ENTITY, "out_of_bounds"),
            Error::Unsupported(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unsupported"),
            Error::Config(_) | Error::Shape(_) | Error::Image { .. } | Error::Json(_) => {
                (StatusCode::BAD_REQUEST, "bad_request")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({ "error": self.0.to_string(), "kind": kind }))).into_response()
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::config(format!("malformed request: {e}")))
}

async fn run<Req, Resp>(reg: Arc<Registry>, body: Bytes, f: fn(&Registry, &Req) -> Result<Resp>) -> ApiResult
where
    Req: DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
{
    let req: Req = parse(&body).map_err(ApiError)?;
    let out = tokio::task::spawn_blocking(move || f(&reg, &req))
        .await
        .map_err(|e| ApiError(Error::Io(std::io::Error::other(e))))?
        .map_err(ApiError)?;
    Ok(Json(out).into_response())
}

async fn translate(State(reg): State<Arc<Registry>>, body: Bytes) -> ApiResult {
    run(reg, body, handle_translate).await
}

async fn search(State(reg): State<Arc<Registry>>, body: Bytes) -> ApiResult {
    run(reg, body, handle_search).await
}

async fn trajectory(State(reg): State<Arc<Registry>>, body: Bytes) -> ApiResult {
    run(reg, body, handle_trajectory).await
}

async fn models(State(reg): State<Arc<Registry>>) -> Response {
    Json(json!({ "models": reg.list() })).into_response()
}

async fn health(State(reg): State<Arc<Registry>>) -> Response {
    Json(json!({ "status": "ok", "models": reg.len() })).into_response()
}

pub fn router(registry: Arc<Registry>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/v1/translate", post(translate))
        .route("/v1/search", post(search))
        .route("/v1/trajectory", post(trajectory))
        .route("/v1/models", get(models))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(registry)
}

/// Serves until the process is stopped.
pub async fn serve(registry: Arc<Registry>, cfg: ServiceConfig) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(registry, cfg.max_body_bytes)).await?;
    Ok(())
}
