//! Read-only HTTP recommendation service.
//!
//! - `GET /api/health`
//! - `POST /api/recommend` with `{"left", "right"?, "k"?}`
//! - `POST /api/echo` (dev mode only) returns the request as parsed
//! - `/ui` serves a static directory when one is configured

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use quoter::ranker::{Recommendation, Recommender};
use quoter::Error;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendRequest {
    pub left: String,
    #[serde(default)]
    pub right: Option<String>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub results: Vec<Recommendation>,
    pub model_fingerprint: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub catalog_size: usize,
}

pub struct AppState {
    pub recommender: Recommender,
    /// Fingerprint every request is checked against; taken from the
    /// checkpoint at startup.
    pub fingerprint: String,
    pub dev: bool,
}

impl AppState {
    pub fn new(recommender: Recommender, dev: bool) -> Self {
        let fingerprint = recommender.fingerprint().to_string();
        AppState {
            recommender,
            fingerprint,
            dev,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Empty(_) | Error::OutOfRange(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/api/health", get(health))
        .route("/api/recommend", post(recommend));
    if state.dev {
        app = app.route("/api/echo", post(echo));
    }
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        catalog_size: state.recommender.catalog().len(),
    })
}

fn validate(req: Result<Json<RecommendRequest>, JsonRejection>) -> Result<RecommendRequest, ApiError> {
    let Json(req) = req.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let right = req.right.as_deref().unwrap_or("");
    if req.left.trim().is_empty() && right.trim().is_empty() {
        return Err(ApiError::bad_request("left and right context are both empty"));
    }
    if req.k == 0 {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    Ok(req)
}

async fn recommend(
    State(state): State<Arc<AppState>>,
    req: Result<Json<RecommendRequest>, JsonRejection>,
) -> Result<Json<RecommendResponse>, ApiError> {
    let req = validate(req)?;
    let started = Instant::now();
    let worker = Arc::clone(&state);
    let results = tokio::task::spawn_blocking(move || {
        let r = &worker.recommender;
        if r.index().fingerprint != worker.fingerprint {
            return Err(Error::StaleIndex {
                index: r.index().fingerprint.clone(),
                current: worker.fingerprint.clone(),
            });
        }
        r.recommend(&req.left, req.right.as_deref().unwrap_or(""), req.k)
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
    })??;
    Ok(Json(RecommendResponse {
        results,
        model_fingerprint: state.fingerprint.clone(),
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    }))
}

async fn echo(req: Result<Json<RecommendRequest>, JsonRejection>) -> Result<Json<RecommendRequest>, ApiError> {
    let Json(req) = req.map_err(|e| ApiError::bad_request(e.body_text()))?;
    Ok(Json(req))
}

/// Binds and serves until interrupted.
pub async fn serve(state: AppState, port: u16, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let app = router(Arc::new(state), ui_dir);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
