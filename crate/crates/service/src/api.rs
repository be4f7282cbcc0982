//! HTTP and WebSocket API over the running workers and the shared store.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::time::Instant;
use xroads_core::analytics::{LoopSpec, QueueZoneSpec};
use xroads_core::Gate;

use crate::pipeline::{DetectorKind, EditError, SceneEdit};
use crate::query::{od_report, Format, OdParams, QueryError, StatsParams, StatsQuery};
use crate::worker::{Command, PipelineHandle, SharedStore, WorkerRef, WorkerStatus};

/// Minimum spacing between live messages on one socket (20 msg/s).
pub const LIVE_MIN_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Clone)]
pub struct AppState {
    pub workers: Arc<Vec<WorkerRef>>,
    pub store: SharedStore,
}

impl AppState {
    pub fn new(workers: Vec<WorkerRef>, store: SharedStore) -> Self {
        Self { workers: Arc::new(workers), store }
    }

    /// The named camera, or the only one when the name is omitted.
    fn worker(&self, camera: Option<&str>) -> Result<&WorkerRef, ApiError> {
        match camera.filter(|c| !c.is_empty()) {
            Some(c) => self
                .workers
                .iter()
                .find(|w| w.shared.camera_id() == c)
                .ok_or_else(|| ApiError::NotFound(format!("unknown camera {c}"))),
            None if self.workers.len() == 1 => Ok(&self.workers[0]),
            None if self.workers.is_empty() => Err(ApiError::NotFound("no cameras are running".into())),
            None => Err(ApiError::BadRequest("several cameras are running; pass ?camera=".into())),
        }
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Unavailable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Unavailable(m) => (StatusCode::SERVICE_UNAVAILABLE, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (code, Json(json!({ "error": msg }))).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Param(..) => ApiError::BadRequest(e.to_string()),
            QueryError::Store(s) => ApiError::BadRequest(s.to_string()),
        }
    }
}

impl From<EditError> for ApiError {
    fn from(e: EditError) -> Self {
        match e {
            EditError::Invalid(m) => ApiError::BadRequest(m),
            EditError::NotFound(m) => ApiError::NotFound(m),
            EditError::Conflict(m) => ApiError::Conflict(m),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/scene", get(scene))
        .route("/api/loops/{id}", put(put_loop).delete(delete_loop))
        .route("/api/zones/{id}", put(put_zone).delete(delete_zone))
        .route("/api/gates/{id}", put(put_gate).delete(delete_gate))
        .route("/api/stats", get(stats))
        .route("/api/od", get(od))
        .route("/api/live", get(live))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub workers: Vec<PipelineHandle>,
}

async fn health(State(st): State<AppState>) -> Json<Health> {
    let workers: Vec<PipelineHandle> = st.workers.iter().map(|w| w.shared.handle()).collect();
    let failed = workers.iter().any(|h| h.status == WorkerStatus::Failed);
    Json(Health { status: if failed { "degraded" } else { "ok" }.into(), workers })
}

#[derive(Debug, Default, Deserialize)]
struct CameraParam {
    camera: Option<String>,
}

async fn scene(State(st): State<AppState>, Query(q): Query<CameraParam>) -> Result<Response, ApiError> {
    let w = st.worker(q.camera.as_deref())?;
    Ok(Json(w.shared.scene()).into_response())
}

/// Reads a detector body, taking the id from the path when the body has none.
fn detector_body<T: serde::de::DeserializeOwned>(id: &str, body: &str) -> Result<T, ApiError> {
    let mut v: Value = serde_json::from_str(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| ApiError::BadRequest("body must be a JSON object".into()))?;
    match obj.get("id") {
        Some(Value::String(b)) if b != id => {
            return Err(ApiError::BadRequest(format!("body id {b} does not match path id {id}")));
        }
        Some(Value::String(_)) => {}
        Some(_) => return Err(ApiError::BadRequest("id must be a string".into())),
        None => {
            obj.insert("id".into(), Value::String(id.to_string()));
        }
    }
    serde_json::from_value(v).map_err(|e| ApiError::BadRequest(format!("invalid detector: {e}")))
}

async fn send_edit(st: &AppState, camera: Option<&str>, edit: SceneEdit) -> Result<(), ApiError> {
    let w = st.worker(camera)?;
    let (reply, rx) = oneshot::channel();
    w.commands
        .send(Command::Edit { edit, reply })
        .map_err(|_| ApiError::Unavailable("worker is not accepting edits".into()))?;
    rx.await
        .map_err(|_| ApiError::Unavailable("worker stopped before applying the edit".into()))??;
    Ok(())
}

async fn put_detector<T, F>(st: AppState, camera: Option<String>, id: String, body: String, wrap: F) -> Result<Response, ApiError>
where
    T: serde::de::DeserializeOwned + Serialize + Clone,
    F: FnOnce(T) -> SceneEdit,
{
    let spec: T = detector_body(&id, &body)?;
    send_edit(&st, camera.as_deref(), wrap(spec.clone())).await?;
    Ok(Json(spec).into_response())
}

async fn delete_detector(st: AppState, camera: Option<String>, kind: DetectorKind, id: String) -> Result<Response, ApiError> {
    send_edit(&st, camera.as_deref(), SceneEdit::Delete { kind, id }).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn put_loop(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CameraParam>,
    body: String,
) -> Result<Response, ApiError> {
    put_detector::<LoopSpec, _>(st, q.camera, id, body, SceneEdit::PutLoop).await
}

async fn put_zone(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CameraParam>,
    body: String,
) -> Result<Response, ApiError> {
    put_detector::<QueueZoneSpec, _>(st, q.camera, id, body, SceneEdit::PutZone).await
}

async fn put_gate(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CameraParam>,
    body: String,
) -> Result<Response, ApiError> {
    put_detector::<Gate, _>(st, q.camera, id, body, SceneEdit::PutGate).await
}

async fn delete_loop(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CameraParam>,
) -> Result<Response, ApiError> {
    delete_detector(st, q.camera, DetectorKind::Loop, id).await
}

async fn delete_zone(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CameraParam>,
) -> Result<Response, ApiError> {
    delete_detector(st, q.camera, DetectorKind::Zone, id).await
}

async fn delete_gate(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<CameraParam>,
) -> Result<Response, ApiError> {
    delete_detector(st, q.camera, DetectorKind::Gate, id).await
}

fn body_response(format: Format, body: String) -> Response {
    let ct = match format {
        Format::Csv => "text/csv; charset=utf-8",
        Format::Json => "application/json",
    };
    ([(header::CONTENT_TYPE, ct)], body).into_response()
}

async fn stats(State(st): State<AppState>, Query(p): Query<StatsParams>) -> Result<Response, ApiError> {
    let q = StatsQuery::parse(&p)?;
    let body = {
        let store = st.store.lock().map_err(|_| ApiError::Internal("store lock poisoned".into()))?;
        q.render(&store)?
    };
    Ok(body_response(q.format, body))
}

async fn od(State(st): State<AppState>, Query(p): Query<OdParams>) -> Result<Response, ApiError> {
    if let Some(c) = p.camera.as_deref().filter(|c| !c.is_empty()) {
        st.worker(Some(c))?;
    }
    let scenes: Vec<_> = st.workers.iter().map(|w| w.shared.scene()).collect();
    let (report, format) = {
        let store = st.store.lock().map_err(|_| ApiError::Internal("store lock poisoned".into()))?;
        od_report(&p, store.trajectories(), &scenes)?
    };
    let body = match format {
        Format::Csv => report.to_csv(),
        Format::Json => serde_json::to_string(&report).expect("report serializes"),
    };
    Ok(body_response(format, body))
}

/// Client message on the live socket: `{"set_rate": "W", "veh_per_s": 0.2}`;
/// a null or missing approach applies the rate to every approach.
#[derive(Debug, Deserialize)]
struct SetRate {
    #[serde(default)]
    set_rate: Option<String>,
    veh_per_s: f64,
}

async fn live(
    State(st): State<AppState>,
    Query(q): Query<CameraParam>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let w = st.worker(q.camera.as_deref())?.clone();
    Ok(ws.on_upgrade(move |socket| live_socket(socket, w)))
}

async fn live_socket(mut socket: WebSocket, w: WorkerRef) {
    let mut rx = w.shared.subscribe();
    let mut last_sent: Option<Instant> = None;
    // Send the current state right away if there is one.
    rx.mark_changed();
    loop {
        tokio::select! {
            changed = rx.changed() => {
                if changed.is_err() {
                    break;
                }
                if let Some(t) = last_sent {
                    // Coalesce: wait out the interval, then send whatever is newest.
                    tokio::time::sleep_until(t + LIVE_MIN_INTERVAL).await;
                }
                let state = rx.borrow_and_update().clone();
                let Some(state) = state else { continue };
                let text = serde_json::to_string(&*state).expect("live state serializes");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
                last_sent = Some(Instant::now());
            }
            msg = socket.recv() => {
                let Some(Ok(msg)) = msg else { break };
                let Message::Text(text) = msg else { continue };
                let reply = control(&w, text.as_str()).await;
                if socket.send(Message::Text(reply.to_string().into())).await.is_err() {
                    break;
                }
            }
        }
    }
}

async fn control(w: &WorkerRef, text: &str) -> Value {
    let req: SetRate = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => return json!({ "error": format!("unrecognised control message: {e}") }),
    };
    let (reply, rx) = oneshot::channel();
    let cmd = Command::SetRate { approach: req.set_rate.clone(), veh_per_s: req.veh_per_s, reply };
    if w.commands.send(cmd).is_err() {
        return json!({ "error": "worker is not running" });
    }
    match rx.await {
        Ok(Ok(())) => json!({ "ok": true, "set_rate": req.set_rate, "veh_per_s": req.veh_per_s }),
        Ok(Err(e)) => json!({ "error": e }),
        Err(_) => json!({ "error": "worker stopped" }),
    }
}

/// Binds `addr` and serves until the future is dropped or fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
