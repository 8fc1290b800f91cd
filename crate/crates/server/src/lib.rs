//! HTTP transport for the prediction service.
//!
//! Handlers take a snapshot of the current bundle at the start of each
//! request, so a reload never affects a request already in flight.

use std::future::Future;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use qsat_core::bundle::{BundleError, ModelBundle};
use qsat_core::service::{ApiError, ServiceState};
use serde_json::Value;
use tokio::net::TcpListener;

/// Shared handle to the bundle currently being served.
#[derive(Clone)]
pub struct AppState {
    current: Arc<RwLock<Arc<ServiceState>>>,
}

impl AppState {
    pub fn new(bundle: ModelBundle) -> Self {
        Self {
            current: Arc::new(RwLock::new(Arc::new(ServiceState::new(bundle)))),
        }
    }

    pub fn snapshot(&self) -> Arc<ServiceState> {
        self.current.read().expect("state lock").clone()
    }

    /// Replaces the served bundle; returns the new model version.
    pub fn swap(&self, bundle: ModelBundle) -> String {
        let next = Arc::new(ServiceState::new(bundle));
        let version = next.model_version.clone();
        *self.current.write().expect("state lock") = next;
        version
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn predict(State(app): State<AppState>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            let err = ApiError {
                field: None,
                message: format!("malformed JSON: {e}"),
            };
            return json_response(StatusCode::BAD_REQUEST, err.to_json());
        }
    };
    let state = app.snapshot();
    match state.handle_predict(&value) {
        Ok(resp) => json_response(StatusCode::OK, resp.to_json()),
        Err(err) => json_response(StatusCode::UNPROCESSABLE_ENTITY, err.to_json()),
    }
}

async fn models(State(app): State<AppState>) -> Response {
    json_response(StatusCode::OK, app.snapshot().handle_models().to_string())
}

async fn importance(State(app): State<AppState>) -> Response {
    json_response(StatusCode::OK, app.snapshot().handle_importance().to_string())
}

async fn health(State(app): State<AppState>) -> Response {
    json_response(StatusCode::OK, app.snapshot().handle_health().to_string())
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/api/v1/predict", post(predict))
        .route("/api/v1/models", get(models))
        .route("/api/v1/importance", get(importance))
        .route("/healthz", get(health))
        .with_state(app)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(listener: TcpListener, app: AppState, shutdown: F) -> io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(app))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutdown requested; draining");
}

/// Reloads the bundle from `path` and swaps it in. A bad file leaves the
/// current bundle in place.
pub fn reload(app: &AppState, path: &Path) -> Result<String, BundleError> {
    let bundle = ModelBundle::load(path)?;
    Ok(app.swap(bundle))
}

/// Reloads on every SIGHUP until the runtime stops.
#[cfg(unix)]
pub fn spawn_reload_on_sighup(app: AppState, path: PathBuf) -> io::Result<()> {
    let mut hup = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::hangup())?;
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            let (app, path) = (app.clone(), path.clone());
            let result = tokio::task::spawn_blocking(move || reload(&app, &path)).await;
            match result {
                Ok(Ok(version)) => tracing::info!(%version, "bundle reloaded"),
                Ok(Err(e)) => tracing::error!(error = %e, "bundle reload failed; keeping current bundle"),
                Err(e) => tracing::error!(error = %e, "bundle reload task failed"),
            }
        }
    });
    Ok(())
}
