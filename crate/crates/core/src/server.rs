//! HTTP front end serving a chat and a segmentation backend over the
//! `/v1/chat` and `/v1/segment` wire contracts.

use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::error::BackendError;
use crate::mllm::wire::{decode_request, ChatWireRequest, ChatWireResponse};
use crate::mllm::{PixelPoint, CHAT_ROUTE};
use crate::pipeline::Backends;
use crate::segment::wire::{SegWireRequest, SegWireResponse, WireMask};
use crate::segment::SEG_ROUTE;
use crate::transport::png_base64_decode;

pub const HEALTH_ROUTE: &str = "/healthz";
/// Round-1 requests carry dozens of images.
pub const MAX_BODY_BYTES: usize = 512 << 20;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    /// Path of the offending request field, when one is to blame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub chat_model: String,
    pub segmentation_model: String,
}

#[derive(Clone)]
struct AppState {
    backends: Backends,
    health: Arc<Health>,
}

fn error(status: StatusCode, error: impl Into<String>, field: Option<String>) -> Response {
    (status, Json(ErrorBody { error: error.into(), field })).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        error(StatusCode::BAD_REQUEST, e.into_inner().to_string(), field)
    })
}

fn backend_failure(e: BackendError) -> Response {
    match e {
        BackendError::Status { status, body } if (400..500).contains(&status) => {
            error(StatusCode::from_u16(status).unwrap_or(StatusCode::BAD_REQUEST), body, None)
        }
        other => error(StatusCode::BAD_GATEWAY, other.to_string(), None),
    }
}

async fn chat(State(state): State<AppState>, body: Bytes) -> Response {
    let wire: ChatWireRequest = match parse_body(&body) {
        Ok(w) => w,
        Err(r) => return r,
    };
    let req = match decode_request(&wire) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.message, Some(e.field)),
    };
    let backend = Arc::clone(&state.backends.chat);
    match tokio::task::spawn_blocking(move || backend.chat(&req)).await {
        Ok(Ok(text)) => Json(ChatWireResponse { text }).into_response(),
        Ok(Err(e)) => backend_failure(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn segment(State(state): State<AppState>, body: Bytes) -> Response {
    let wire: SegWireRequest = match parse_body(&body) {
        Ok(w) => w,
        Err(r) => return r,
    };
    let image = match png_base64_decode(&wire.image) {
        Ok(img) => img,
        Err(e) => return error(StatusCode::BAD_REQUEST, e, Some("image".into())),
    };
    let (w, h) = image.dimensions();
    if let Some(i) = wire.points.iter().position(|p| p.x >= w || p.y >= h) {
        return error(StatusCode::BAD_REQUEST, format!("point outside the {w}x{h} image"), Some(format!("points[{i}]")));
    }
    let points: Vec<PixelPoint> = wire.points.iter().map(|p| PixelPoint::new(p.x, p.y)).collect();
    let backend = Arc::clone(&state.backends.seg);
    match tokio::task::spawn_blocking(move || backend.segment(&image, &points)).await {
        Ok(Ok(masks)) => Json(SegWireResponse { masks: masks.iter().map(WireMask::from_candidate).collect() }).into_response(),
        Ok(Err(e)) => backend_failure(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(state.health.as_ref().clone())
}

pub fn router(backends: Backends, chat_model: &str, segmentation_model: &str) -> Router {
    let info = Arc::new(Health {
        status: "ok".into(),
        chat_model: chat_model.into(),
        segmentation_model: segmentation_model.into(),
    });
    Router::new()
        .route(CHAT_ROUTE, post(chat))
        .route(SEG_ROUTE, post(segment))
        .route(HEALTH_ROUTE, get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(AppState { backends, health: info })
}

/// A server running on its own thread. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL, e.g. `http://127.0.0.1:41234`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops on its own.
    pub fn wait(mut self) -> std::io::Result<()> {
        let thread = self.thread.take().expect("server thread");
        thread.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked")))
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `router` until the
/// handle is dropped.
pub fn spawn(addr: SocketAddr, router: Router) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("funcground-server".into()).spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    })?;
    Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread) })
}
