use crate::api::{handle_predict, FieldError, PredictError, PredictRequest};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use framecast::model::{fingerprint, QuadNet, QuadPredictor};
use serde_json::json;
use std::path::Path;
use std::sync::Arc;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

/// Inference jobs allowed to run at once; the rest wait for a permit.
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Clone)]
pub struct AppState {
    model: Option<Arc<dyn QuadPredictor + Send + Sync>>,
    model_version: String,
    permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(
        model: Option<Arc<dyn QuadPredictor + Send + Sync>>,
        model_version: impl Into<String>,
        workers: usize,
    ) -> Self {
        Self {
            model,
            model_version: model_version.into(),
            permits: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    /// Loads a checkpoint; the model version is the checkpoint fingerprint.
    pub fn from_weights(path: &Path, workers: usize) -> anyhow::Result<Self> {
        let (model, version) = load_weights(path)?;
        Ok(Self::new(Some(Arc::new(model)), version, workers))
    }

    pub fn model_version(&self) -> &str {
        &self.model_version
    }
}

pub fn load_weights(path: &Path) -> anyhow::Result<(QuadNet<f32>, String)> {
    let bytes = std::fs::read(path).map_err(|e| anyhow::anyhow!("cannot read weights {}: {e}", path.display()))?;
    let model = QuadNet::<f32>::from_checkpoint_bytes(&bytes)?;
    Ok((model, fingerprint(&bytes)))
}

fn error(status: StatusCode, field: &str, message: impl ToString) -> Response {
    let body = FieldError::new(field, message);
    (status, Json(json!({ "error": body }))).into_response()
}

async fn predict(State(state): State<AppState>, body: Bytes) -> Response {
    let Some(model) = state.model.clone() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "model", "no model loaded");
    };
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "body", e),
    };
    let Ok(_permit) = state.permits.clone().acquire_owned().await else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "model", "service shutting down");
    };
    let version = state.model_version.clone();
    let job = tokio::task::spawn_blocking(move || handle_predict(model.as_ref(), &version, &req).map(|(r, _)| r));
    match job.await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(PredictError::Invalid(e))) => (StatusCode::BAD_REQUEST, Json(json!({ "error": e }))).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, "model", e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "model", e),
    }
}

async fn healthz(State(state): State<AppState>) -> Response {
    let (status, label) = if state.model.is_some() {
        (StatusCode::OK, "ok")
    } else {
        (StatusCode::SERVICE_UNAVAILABLE, "unavailable")
    };
    (status, Json(json!({ "status": label, "model_version": state.model_version }))).into_response()
}

/// `cors_origin` of `None` allows any origin.
pub fn router(state: AppState, cors_origin: Option<&str>) -> anyhow::Result<Router> {
    let origin = match cors_origin {
        None | Some("*") => AllowOrigin::from(Any),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o)?),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Ok(Router::new()
        .route("/api/predict", post(predict))
        .route("/healthz", get(healthz))
        .layer(cors)
        .with_state(state))
}

pub async fn serve(state: AppState, port: u16, cors_origin: Option<&str>) -> anyhow::Result<()> {
    let app = router(state, cors_origin)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
