//! HTTP front end for [`SimService`].
//!
//! ```text
//! POST /v1/locate           locate request body, optional x-client-key header
//! POST /v1/admin/advance    {"days": N}
//! GET  /v1/health
//! ```

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{ConnectInfo, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use super::serve::{ServeError, SimService};
use crate::client::{Transport, CLIENT_KEY_HEADER};
use crate::protocol::{decode_request, encode_response, LocateRequest, LocateResponse, TransportError, LOCATE_PATH};

#[derive(Clone)]
struct AppState {
    service: Arc<SimService>,
    started: Instant,
}

pub fn router(service: Arc<SimService>) -> Router {
    Router::new()
        .route(LOCATE_PATH, post(locate))
        .route("/v1/admin/advance", post(advance))
        .route("/v1/health", get(health))
        .with_state(AppState { service, started: Instant::now() })
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, service: Arc<SimService>) -> std::io::Result<()> {
    axum::serve(listener, router(service).into_make_service_with_connect_info::<SocketAddr>()).await
}

async fn locate(
    State(state): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let request = match decode_request(&body) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, Json(json!({ "error": e.to_string() }))).into_response(),
    };
    let key = headers
        .get(CLIENT_KEY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .unwrap_or_else(|| peer.ip().to_string());
    match state.service.handle(&request, &key, state.started.elapsed()) {
        Ok(resp) => ([(header::CONTENT_TYPE, "application/json")], encode_response(&resp)).into_response(),
        Err(ServeError::RateLimited { retry_after_secs }) => (
            StatusCode::TOO_MANY_REQUESTS,
            [(header::RETRY_AFTER, retry_after_secs.to_string())],
            Json(json!({ "error": "rate limited" })),
        )
            .into_response(),
    }
}

#[derive(Deserialize)]
struct AdvanceBody {
    days: u32,
}

async fn advance(State(state): State<AppState>, Json(body): Json<AdvanceBody>) -> Response {
    let service = state.service.clone();
    let day = tokio::task::spawn_blocking(move || service.advance(body.days)).await;
    match day {
        Ok(day) => Json(json!({ "day": day })).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    let view = state.service.view();
    Json(json!({ "day": view.day, "date": view.date.to_string(), "geolocatable": view.len() })).into_response()
}

/// Calls a [`SimService`] directly, with the same error mapping as HTTP.
#[derive(Debug, Clone)]
pub struct InProcessTransport {
    service: Arc<SimService>,
    key: String,
    started: Instant,
}

impl InProcessTransport {
    pub fn new(service: Arc<SimService>, key: impl Into<String>) -> Self {
        InProcessTransport { service, key: key.into(), started: Instant::now() }
    }
}

impl Transport for InProcessTransport {
    async fn send(&self, request: &LocateRequest) -> Result<LocateResponse, TransportError> {
        self.service
            .handle(request, &self.key, self.started.elapsed())
            .map_err(|ServeError::RateLimited { retry_after_secs }| TransportError::RateLimited {
                retry_after_secs: Some(retry_after_secs),
            })
    }
}
