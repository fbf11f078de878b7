//! HTTP API over live sessions.
//!
//! Each session runs in its own task. Handlers lock the session briefly to
//! read snapshots or enqueue actions; the tick task is the only writer of
//! plant state. Clients follow a session through `GET
//! /sessions/{id}/events`, a server-sent-event stream that resumes from
//! `Last-Event-ID` or `?after=`.

use std::collections::{BTreeMap, VecDeque};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use proactive_safety::config::ScenarioConfig;
use proactive_safety::graph::RiskGraph;
use proactive_safety::query::Query as GraphQuery;
use proactive_safety::session::{OperatorAction, Session, SessionEvent};
use proactive_safety::Error as CoreError;
use serde::{Deserialize, Serialize};
use tokio::sync::{watch, Notify};

/// Ticks run per lock when pacing is off.
const BATCH: u64 = 25;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::UnknownIds(_) => StatusCode::NOT_FOUND,
            CoreError::Session(_) => StatusCode::CONFLICT,
            CoreError::Domain(_)
            | CoreError::InvalidArgument(_)
            | CoreError::Config(_)
            | CoreError::Parse { .. }
            | CoreError::Toml(_)
            | CoreError::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct SessionHandle {
    session: Mutex<Session>,
    /// Last emitted event sequence number.
    seq: watch::Sender<u64>,
    wake: Notify,
    ticks_per_second: f64,
}

impl SessionHandle {
    fn lock(&self) -> std::sync::MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish(&self, seq: u64) {
        self.seq.send_replace(seq);
    }
}

pub struct AppState {
    default_config: ScenarioConfig,
    graph: Option<Arc<RiskGraph>>,
    sessions: Mutex<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(default_config: ScenarioConfig, graph: Option<RiskGraph>) -> Arc<Self> {
        Arc::new(Self {
            default_config,
            graph: graph.map(Arc::new),
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    fn session(&self, id: &str) -> ApiResult<Arc<SessionHandle>> {
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session id {id}")))
    }
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_status))
        .route(
            "/sessions/{id}/actions",
            post(post_action).get(list_actions),
        )
        .route("/sessions/{id}/telemetry", get(telemetry))
        .route("/sessions/{id}/telemetry.csv", get(telemetry_csv))
        .route("/sessions/{id}/alarms", get(alarms))
        .route("/sessions/{id}/alarms.csv", get(alarms_csv))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/queries", get(auto_queries))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app(state)).await?;
    Ok(())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Full scenario config as JSON; the server default when absent.
    #[serde(default)]
    pub config: Option<ScenarioConfig>,
    /// Scenario config as TOML text.
    #[serde(default)]
    pub config_toml: Option<String>,
    #[serde(default)]
    pub ticks_per_second: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Created {
    id: String,
    status: proactive_safety::session::SessionStatus,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let config = match (req.config, req.config_toml) {
        (Some(_), Some(_)) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "give either config or config_toml, not both",
            ))
        }
        (Some(c), None) => c,
        (None, Some(t)) => ScenarioConfig::from_toml_str(&t)?,
        (None, None) => state.default_config.clone(),
    };
    let tps = req
        .ticks_per_second
        .unwrap_or(config.pacing.ticks_per_second);
    if !(tps.is_finite() && tps >= 0.0) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "ticks_per_second must be >= 0",
        ));
    }
    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session::start(id.clone(), config, state.graph.clone())?;
    let status = session.status();
    let (seq, _) = watch::channel(session.last_event_seq());
    let handle = Arc::new(SessionHandle {
        session: Mutex::new(session),
        seq,
        wake: Notify::new(),
        ticks_per_second: tps,
    });
    state
        .sessions
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(id.clone(), handle.clone());
    tokio::spawn(run_session(handle));
    Ok((StatusCode::CREATED, Json(Created { id, status })))
}

/// Tick loop of one session. Sleeps while paused or finished.
async fn run_session(handle: Arc<SessionHandle>) {
    let period = (handle.ticks_per_second > 0.0)
        .then(|| Duration::from_secs_f64(1.0 / handle.ticks_per_second));
    let mut interval = period.map(|p| {
        let mut i = tokio::time::interval(p);
        i.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        i
    });
    loop {
        let woken = handle.wake.notified();
        let runnable = {
            let s = handle.lock();
            !s.is_paused() && !s.is_finished()
        };
        if !runnable {
            woken.await;
            continue;
        }
        if let Some(i) = interval.as_mut() {
            i.tick().await;
        }
        let n = if period.is_some() { 1 } else { BATCH };
        let seq = {
            let mut s = handle.lock();
            for _ in 0..n {
                if s.is_paused() || s.is_finished() {
                    break;
                }
                if let Err(e) = s.tick() {
                    log::error!("session {}: {e}", s.id());
                    break;
                }
            }
            s.last_event_seq()
        };
        handle.publish(seq);
        if period.is_none() {
            tokio::task::yield_now().await;
        }
    }
}

async fn list_sessions(
    State(state): State<Arc<AppState>>,
) -> Json<Vec<proactive_safety::session::SessionStatus>> {
    let handles: Vec<_> = state
        .sessions
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .values()
        .cloned()
        .collect();
    Json(handles.iter().map(|h| h.lock().status()).collect())
}

async fn session_status(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<proactive_safety::session::SessionStatus>> {
    Ok(Json(state.session(&id)?.lock().status()))
}

async fn post_action(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(action): Json<OperatorAction>,
) -> ApiResult<Json<proactive_safety::session::ActionAck>> {
    let h = state.session(&id)?;
    let (ack, seq) = {
        let mut s = h.lock();
        let ack = s.apply_action(action)?;
        (ack, s.last_event_seq())
    };
    h.publish(seq);
    h.wake.notify_one();
    Ok(Json(ack))
}

async fn list_actions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<proactive_safety::session::ActionRecord>>> {
    Ok(Json(state.session(&id)?.lock().actions().to_vec()))
}

#[derive(Debug, Deserialize)]
struct Since {
    #[serde(default)]
    since: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Telemetry {
    samples: Vec<proactive_safety::monitor::Sample>,
    tick: u64,
}

async fn telemetry(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
) -> ApiResult<Json<Telemetry>> {
    let h = state.session(&id)?;
    let s = h.lock();
    let samples = s
        .telemetry_since(q.since.unwrap_or(f64::NEG_INFINITY))
        .to_vec();
    Ok(Json(Telemetry {
        samples,
        tick: s.tick_count(),
    }))
}

fn csv_response(body: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

async fn telemetry_csv(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let samples = state.session(&id)?.lock().telemetry().to_vec();
    let mut buf = Vec::new();
    proactive_safety::scenario::write_telemetry_csv(&samples, &mut buf, true)?;
    Ok(csv_response(buf))
}

async fn alarms(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<proactive_safety::session::AlarmRecord>>> {
    Ok(Json(state.session(&id)?.lock().alarms().to_vec()))
}

async fn alarms_csv(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let events: Vec<_> = state
        .session(&id)?
        .lock()
        .alarms()
        .iter()
        .map(|a| a.event.clone())
        .collect();
    let mut buf = Vec::new();
    proactive_safety::monitor::write_alarms_csv(&events, &mut buf)?;
    Ok(csv_response(buf))
}

async fn query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(q): Json<GraphQuery>,
) -> ApiResult<Json<proactive_safety::query::QueryResult>> {
    let h = state.session(&id)?;
    let s = h.lock();
    Ok(Json(s.query(&q)?))
}

async fn auto_queries(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<proactive_safety::session::AutoQuery>>> {
    Ok(Json(state.session(&id)?.lock().queries().to_vec()))
}

#[derive(Debug, Deserialize)]
struct After {
    #[serde(default)]
    after: Option<u64>,
}

fn to_sse(e: &SessionEvent) -> Event {
    Event::default()
        .id(e.seq.to_string())
        .event(e.payload.name())
        .data(serde_json::to_string(e).unwrap_or_else(|err| format!("{{\"error\":\"{err}\"}}")))
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<After>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let h = state.session(&id)?;
    let last_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let after = last_id.or(q.after).unwrap_or(0);
    let rx = h.seq.subscribe();
    let stream = stream::unfold(
        (h, rx, after, VecDeque::<Event>::new()),
        |(h, mut rx, mut after, mut buf)| async move {
            loop {
                if let Some(e) = buf.pop_front() {
                    return Some((Ok(e), (h, rx, after, buf)));
                }
                rx.borrow_and_update();
                let fresh: Vec<SessionEvent> = h.lock().events_since(after).to_vec();
                if let Some(last) = fresh.last() {
                    after = last.seq;
                    buf = fresh.iter().map(to_sse).collect();
                    continue;
                }
                if rx.changed().await.is_err() {
                    return None;
                }
            }
        },
    );
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
