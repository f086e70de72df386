//! HTTP API over a loaded model: one-shot recommendations and in-memory
//! sessions that build a case event by event.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use ppm_core::declare::RvState;
use ppm_core::recommend::RecommendationResult;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::bundle::ModelBundle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub prefix: Vec<String>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

#[derive(Default)]
pub struct AppState {
    model: RwLock<Option<Arc<ModelBundle>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(model: Option<ModelBundle>) -> Arc<Self> {
        let s = AppState::default();
        *s.model.write().unwrap_or_else(|e| e.into_inner()) = model.map(Arc::new);
        Arc::new(s)
    }

    pub fn set_model(&self, model: ModelBundle) {
        *self.model.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(model));
    }

    pub fn model(&self) -> Option<Arc<ModelBundle>> {
        self.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    fn create_session(&self, prefix: Vec<String>) -> Arc<Mutex<Session>> {
        let mut sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let id = loop {
            let n = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
            let id = format!("s{n:06}");
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        let now = now_ms();
        let s = Arc::new(Mutex::new(Session { id: id.clone(), prefix, created_ms: now, updated_ms: now }));
        sessions.insert(id, s.clone());
        s
    }

    pub fn snapshot(&self) -> Vec<Session> {
        let sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let mut out: Vec<Session> =
            sessions.values().map(|s| s.lock().unwrap_or_else(|e| e.into_inner()).clone()).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn restore(&self, saved: Vec<Session>) {
        let mut sessions = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        for s in saved {
            if let Some(n) = s.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                self.next_id.fetch_max(n, Ordering::Relaxed);
            }
            sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], bytes)
            .into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

fn error(status: StatusCode, message: &str) -> Response {
    json_response(status, &ErrorBody { error: message })
}

fn no_model() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "no model loaded")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendRequest {
    activities: Vec<String>,
}

/// Body of a 422 answer: the result plus the unknown activities.
#[derive(Serialize)]
struct FlaggedResult<'a> {
    #[serde(flatten)]
    result: &'a RecommendationResult,
    warning: String,
    unknown_activities: Vec<String>,
}

#[derive(Serialize)]
struct NoPathBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    unknown_activities: Vec<String>,
}

fn unknown_warning(unknown: &[String]) -> String {
    format!("activities outside the model alphabet were treated as never matching: {}", unknown.join(", "))
}

async fn recommend(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let Some(model) = state.model() else {
        return no_model();
    };
    let req: RecommendRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &format!("invalid body: {e}")),
    };
    if req.activities.is_empty() {
        return error(StatusCode::BAD_REQUEST, "the prefix is empty");
    }
    let unknown = model.unknown_activities(&req.activities);
    match model.recommend(&req.activities) {
        Ok(result) if unknown.is_empty() => json_response(StatusCode::OK, &result),
        Ok(result) => json_response(
            StatusCode::UNPROCESSABLE_ENTITY,
            &FlaggedResult {
                result: &result,
                warning: unknown_warning(&unknown),
                unknown_activities: unknown,
            },
        ),
        Err(e) => json_response(
            StatusCode::CONFLICT,
            &NoPathBody { error: e.to_string(), unknown_activities: unknown },
        ),
    }
}

/// Session state with recommendations for its current prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub prefix: Vec<String>,
    pub length: usize,
    pub created_ms: u64,
    pub updated_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_activities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub result: Option<RecommendationResult>,
    /// States of the constraints on the chosen path.
    pub rv_snapshot: BTreeMap<String, RvState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn view(model: &ModelBundle, s: &Session) -> (StatusCode, SessionView) {
    let unknown = model.unknown_activities(&s.prefix);
    let warning = (!unknown.is_empty()).then(|| unknown_warning(&unknown));
    let mut v = SessionView {
        id: s.id.clone(),
        prefix: s.prefix.clone(),
        length: s.prefix.len(),
        created_ms: s.created_ms,
        updated_ms: s.updated_ms,
        unknown_activities: unknown,
        warning,
        result: None,
        rv_snapshot: BTreeMap::new(),
        error: None,
    };
    match model.recommend(&s.prefix) {
        Ok(r) => {
            v.rv_snapshot = r.rv_snapshot.clone();
            v.result = Some(r);
            (StatusCode::OK, v)
        }
        Err(e) => {
            v.error = Some(e.to_string());
            (StatusCode::CONFLICT, v)
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    activities: Vec<String>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let Some(model) = state.model() else {
        return no_model();
    };
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return error(StatusCode::BAD_REQUEST, &format!("invalid body: {e}")),
        }
    };
    let session = state.create_session(req.activities);
    let s = session.lock().unwrap_or_else(|e| e.into_inner());
    let (status, v) = view(&model, &s);
    let status = if status == StatusCode::OK { StatusCode::CREATED } else { status };
    json_response(status, &v)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppendEvent {
    activity: String,
}

async fn append_event(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Response {
    let Some(model) = state.model() else {
        return no_model();
    };
    let Some(session) = state.session(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown session");
    };
    let req: AppendEvent = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &format!("invalid body: {e}")),
    };
    if req.activity.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty activity");
    }
    // the lock covers the append and the recomputation
    let mut s = session.lock().unwrap_or_else(|e| e.into_inner());
    s.prefix.push(req.activity);
    s.updated_ms = now_ms().max(s.updated_ms);
    let (status, v) = view(&model, &s);
    json_response(status, &v)
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(model) = state.model() else {
        return no_model();
    };
    let Some(session) = state.session(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown session");
    };
    let s = session.lock().unwrap_or_else(|e| e.into_inner());
    let (status, v) = view(&model, &s);
    json_response(status, &v)
}

async fn get_model(State(state): State<Arc<AppState>>) -> Response {
    match state.model() {
        Some(m) => json_response(StatusCode::OK, &m.summary()),
        None => no_model(),
    }
}

/// The API routes. `cors_origin = None` allows any origin.
pub fn router(state: Arc<AppState>, cors_origin: Option<HeaderValue>) -> Router {
    let cors = CorsLayer::new()
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE])
        .allow_origin(match cors_origin {
            Some(o) => AllowOrigin::exact(o),
            None => AllowOrigin::any(),
        });
    Router::new()
        .route("/recommend", post(recommend))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", post(append_event))
        .route("/model", get(get_model))
        .layer(cors)
        .with_state(state)
}

pub fn load_sessions(path: &Path) -> std::io::Result<Vec<Session>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

pub fn save_sessions(path: &Path, sessions: &[Session]) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(sessions).map_err(std::io::Error::other)?;
    std::fs::write(path, text)
}

pub struct ServeOptions {
    pub port: u16,
    pub host: String,
    pub cors_origin: Option<HeaderValue>,
    /// Sessions are restored from and saved to this file.
    pub sessions_file: Option<PathBuf>,
}

/// Serves until interrupted, then saves the sessions if asked to.
pub async fn serve(state: Arc<AppState>, opts: ServeOptions) -> std::io::Result<()> {
    if let Some(path) = &opts.sessions_file {
        if path.exists() {
            state.restore(load_sessions(path)?);
        }
    }
    let listener = tokio::net::TcpListener::bind((opts.host.as_str(), opts.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state.clone(), opts.cors_origin))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    if let Some(path) = &opts.sessions_file {
        save_sessions(path, &state.snapshot())?;
        log::info!("saved sessions to {}", path.display());
    }
    Ok(())
}
