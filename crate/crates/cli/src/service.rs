//! HTTP session service.
//!
//! Every session runs on its own worker thread over the shared read-only
//! pool. Handlers talk to the worker through an ordered command queue and
//! read its event log; the SSE endpoint replays that log from the start and
//! then follows it until the session ends.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use futures::Stream;
use serde::{Deserialize, Serialize};
use tokio::sync::{oneshot, watch};

use pdna_core::pool::{Pool, ReferenceDictionary};
use pdna_core::pyramid::Image;
use pdna_core::raster::png_bytes;
use pdna_core::retrieval::{LayerEvent, RetrievalConfig, RetrievalSession, SessionState};

/// One SSE payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPayload {
    pub layer: usize,
    /// PNG of the preview, base64.
    pub preview_raster_base64: String,
    pub width: usize,
    pub height: usize,
    /// `null` when no original is known or the preview is identical to it.
    pub psnr_db: Option<f64>,
    pub cost_nt: u64,
    pub gain_estimate: f64,
    pub state: SessionState,
}

impl EventPayload {
    fn from_event(e: &LayerEvent) -> Self {
        Self {
            layer: e.layer,
            preview_raster_base64: base64::engine::general_purpose::STANDARD
                .encode(png_bytes(&e.preview)),
            width: e.preview.width(),
            height: e.preview.height(),
            psnr_db: e.psnr_db.filter(|p| p.is_finite()),
            cost_nt: e.cost_nt,
            gain_estimate: e.gain_estimate,
            state: e.state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum LogEntry {
    Layer(EventPayload),
    Failed { error: String, cost_nt: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub image_id: String,
    pub state: SessionState,
    pub layers_done: usize,
    pub cost_nt: u64,
    pub error: Option<String>,
}

enum Cmd {
    Advance,
    Stop(oneshot::Sender<SessionStatus>),
}

struct Shared {
    status: SessionStatus,
    log: Vec<LogEntry>,
}

struct Handle {
    commands: Mutex<mpsc::Sender<Cmd>>,
    shared: Arc<Mutex<Shared>>,
    /// Bumped whenever `shared` changes.
    changed: watch::Receiver<usize>,
}

pub struct AppState {
    pool: Arc<Pool>,
    dict: Arc<ReferenceDictionary>,
    config: RetrievalConfig,
    originals: BTreeMap<String, Image>,
    sessions: Mutex<HashMap<String, Arc<Handle>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(pool: Pool, dict: ReferenceDictionary, config: RetrievalConfig) -> Self {
        Self {
            pool: Arc::new(pool),
            dict: Arc::new(dict),
            config,
            originals: BTreeMap::new(),
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Originals used to report PSNR, keyed by image id.
    pub fn with_originals(mut self, originals: BTreeMap<String, Image>) -> Self {
        self.originals = originals;
        self
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/images", get(list_images))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status))
        .route("/sessions/{id}/events", get(session_events))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/stop", post(stop))
        .with_state(state)
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Serialize)]
struct ImageEntry {
    image_id: String,
    layers: usize,
}

async fn list_images(State(app): State<Arc<AppState>>) -> Json<Vec<ImageEntry>> {
    Json(
        app.dict
            .images()
            .into_iter()
            .map(|(image_id, layers)| ImageEntry { image_id, layers })
            .collect(),
    )
}

#[derive(Deserialize)]
struct CreateSession {
    image_id: String,
    seed: Option<u64>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    if app.dict.layers_of(&req.image_id).is_empty() {
        return Err(ApiError(
            StatusCode::NOT_FOUND,
            format!("image {} is not registered", req.image_id),
        ));
    }
    let id = app.next_id.fetch_add(1, Ordering::Relaxed).to_string();
    let mut config = app.config.clone();
    if let Some(seed) = req.seed {
        config.seed = seed;
    }
    let handle = spawn_worker(&app, id.clone(), req.image_id, config);
    app.sessions.lock().unwrap().insert(id.clone(), handle);
    Ok((
        StatusCode::CREATED,
        Json(serde_json::json!({ "session_id": id })),
    ))
}

fn spawn_worker(
    app: &AppState,
    id: String,
    image_id: String,
    config: RetrievalConfig,
) -> Arc<Handle> {
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (changed_tx, changed_rx) = watch::channel(0usize);
    let shared = Arc::new(Mutex::new(Shared {
        status: SessionStatus {
            session_id: id,
            image_id: image_id.clone(),
            state: SessionState::Running,
            layers_done: 0,
            cost_nt: 0,
            error: None,
        },
        log: Vec::new(),
    }));
    let pool = Arc::clone(&app.pool);
    let dict = Arc::clone(&app.dict);
    let original = app.originals.get(&image_id).cloned();
    let worker_shared = Arc::clone(&shared);
    thread::spawn(move || {
        run_worker(
            &pool,
            &dict,
            &image_id,
            config,
            original,
            cmd_rx,
            &worker_shared,
            &changed_tx,
        )
    });
    Arc::new(Handle {
        commands: Mutex::new(cmd_tx),
        shared,
        changed: changed_rx,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_worker(
    pool: &Pool,
    dict: &ReferenceDictionary,
    image_id: &str,
    config: RetrievalConfig,
    original: Option<Image>,
    commands: mpsc::Receiver<Cmd>,
    shared: &Mutex<Shared>,
    changed: &watch::Sender<usize>,
) {
    let publish = |session: &RetrievalSession, error: Option<String>| {
        let mut s = shared.lock().unwrap();
        let logged = s
            .log
            .iter()
            .filter(|e| matches!(e, LogEntry::Layer(_)))
            .count();
        for e in &session.events()[logged..] {
            s.log.push(LogEntry::Layer(EventPayload::from_event(e)));
        }
        s.status.state = session.state();
        s.status.layers_done = session.decoded_layers().len();
        s.status.cost_nt = session.cost_nt();
        if let Some(msg) = error {
            s.log.push(LogEntry::Failed {
                error: msg.clone(),
                cost_nt: session.cost_nt(),
            });
            s.status.error = Some(msg);
            s.status.state = SessionState::Stopped;
        }
        let n = s.log.len();
        drop(s);
        changed.send_replace(n);
    };
    let fail_early = |msg: String| {
        let mut s = shared.lock().unwrap();
        s.log.push(LogEntry::Failed {
            error: msg.clone(),
            cost_nt: 0,
        });
        s.status.error = Some(msg);
        s.status.state = SessionState::Stopped;
        let n = s.log.len();
        drop(s);
        changed.send_replace(n);
    };

    let mut session = match RetrievalSession::open(pool, dict, image_id, config, original) {
        Ok(s) => s,
        Err(e) => return fail_early(e.to_string()),
    };
    let first = session.advance().err().map(|e| e.to_string());
    publish(&session, first.clone());
    if first.is_some() {
        return;
    }
    while let Ok(cmd) = commands.recv() {
        match cmd {
            Cmd::Advance => {
                let result = session.advance().err().map(|e| e.to_string());
                publish(&session, result);
            }
            Cmd::Stop(reply) => {
                // a stop that loses the race with completion is answered
                // with the final status
                let _ = session.stop();
                publish(&session, None);
                let _ = reply.send(shared.lock().unwrap().status.clone());
            }
        }
        if matches!(
            session.state(),
            SessionState::Stopped | SessionState::Complete
        ) {
            break;
        }
    }
    // stop requests still queued see their reply channel close
    drop(commands);
}

fn lookup(app: &AppState, id: &str) -> Result<Arc<Handle>, ApiError> {
    app.sessions
        .lock()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no session {id}")))
}

async fn session_status(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionStatus>, ApiError> {
    let h = lookup(&app, &id)?;
    let status = h.shared.lock().unwrap().status.clone();
    Ok(Json(status))
}

fn conflict(state: SessionState) -> ApiError {
    let msg = match state {
        SessionState::Running => "a layer is still being retrieved",
        SessionState::Stopped => "session is stopped",
        SessionState::Complete => "all layers are already retrieved",
        SessionState::AwaitingDecision => "session is awaiting a decision",
    };
    ApiError(StatusCode::CONFLICT, msg.into())
}

async fn advance(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<(StatusCode, Json<SessionStatus>), ApiError> {
    let h = lookup(&app, &id)?;
    let status = {
        let mut s = h.shared.lock().unwrap();
        if s.status.state != SessionState::AwaitingDecision {
            return Err(conflict(s.status.state));
        }
        s.status.state = SessionState::Running;
        s.status.clone()
    };
    h.commands
        .lock()
        .unwrap()
        .send(Cmd::Advance)
        .map_err(|_| conflict(SessionState::Stopped))?;
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn stop(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionStatus>, ApiError> {
    let h = lookup(&app, &id)?;
    {
        let s = h.shared.lock().unwrap();
        if matches!(
            s.status.state,
            SessionState::Stopped | SessionState::Complete
        ) {
            return Err(conflict(s.status.state));
        }
    }
    let (tx, rx) = oneshot::channel();
    h.commands
        .lock()
        .unwrap()
        .send(Cmd::Stop(tx))
        .map_err(|_| conflict(SessionState::Stopped))?;
    match rx.await {
        Ok(status) => Ok(Json(status)),
        // the worker ended first; report where it ended
        Err(_) => Err(conflict(h.shared.lock().unwrap().status.state)),
    }
}

fn to_sse(entry: &LogEntry) -> Event {
    match entry {
        LogEntry::Layer(p) => Event::default().json_data(p).expect("serializable"),
        LogEntry::Failed { .. } => Event::default()
            .event("error")
            .json_data(entry)
            .expect("serializable"),
    }
}

async fn session_events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let h = lookup(&app, &id)?;
    let stream = futures::stream::unfold((h, 0usize, false), |(h, cursor, done)| async move {
        if done {
            return None;
        }
        let mut rx = h.changed.clone();
        loop {
            rx.borrow_and_update();
            let (next, finished) = {
                let s = h.shared.lock().unwrap();
                let finished = matches!(
                    s.status.state,
                    SessionState::Stopped | SessionState::Complete
                );
                (
                    s.log.get(cursor).cloned(),
                    finished && cursor + 1 >= s.log.len(),
                )
            };
            if let Some(entry) = next {
                return Some((Ok(to_sse(&entry)), (h, cursor + 1, finished)));
            }
            if finished || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
