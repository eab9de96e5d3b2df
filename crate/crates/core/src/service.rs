//! HTTP front end: spec upload, planning, repair, synthesis, trace checking and live sessions.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::broadcast;

use crate::dsl::{parse_spec, validate_spec, DomainSpec};
use crate::net::{synthesize, NetError, PetriNet};
use crate::plan::{Goal, Plan};
use crate::planner::{plan, DEFAULT_MAX_DEPTH};
use crate::simulator::{check_fix, RepairError, DEFAULT_MAX_ROUNDS};
use crate::token::{check_trace, Session, SessionStatus, TokenError, DEFAULT_MAX_FIRINGS};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8642";
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(30 * 60);
/// Plans returned when a request does not set `maxPlans`.
pub const DEFAULT_MAX_PLANS: usize = 50;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub session_ttl: Duration,
    pub max_firings: usize,
}

impl Default for ServiceConfig {
    fn default() -> ServiceConfig {
        ServiceConfig { session_ttl: DEFAULT_SESSION_TTL, max_firings: DEFAULT_MAX_FIRINGS }
    }
}

struct SpecEntry {
    spec: Arc<DomainSpec>,
    net: OnceLock<Result<Arc<PetriNet>, NetError>>,
}

impl SpecEntry {
    fn net(&self) -> Result<Arc<PetriNet>, NetError> {
        self.net.get_or_init(|| synthesize(&self.spec).map(Arc::new)).clone()
    }
}

struct SessionEntry {
    spec_id: String,
    session: Session,
    revision: u64,
    touched: Instant,
    events: broadcast::Sender<String>,
}

#[derive(Default)]
struct Inner {
    specs: RwLock<BTreeMap<String, Arc<SpecEntry>>>,
    sessions: Mutex<HashMap<String, SessionEntry>>,
    next_session: Mutex<u64>,
}

/// Shared service state; cheap to clone.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> AppState {
        AppState { inner: Arc::default(), config }
    }

    /// Drops sessions idle for longer than the TTL. Returns how many were dropped.
    pub fn evict_idle(&self, now: Instant) -> usize {
        let mut sessions = self.inner.sessions.lock().expect("sessions lock");
        let before = sessions.len();
        sessions.retain(|_, s| now.duration_since(s.touched) <= self.config.session_ttl);
        before - sessions.len()
    }

    fn spec(&self, id: &str) -> Result<Arc<SpecEntry>, ApiError> {
        self.inner
            .specs
            .read()
            .expect("specs lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown spec `{id}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError { status, body: json!({ "error": message.into() }) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<NetError> for ApiError {
    fn from(e: NetError) -> ApiError {
        ApiError::new(StatusCode::CONFLICT, e.to_string())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/specs", get(list_specs).post(create_spec))
        .route("/specs/{id}/net", get(get_net))
        .route("/specs/{id}/plan", post(plan_goal))
        .route("/specs/{id}/check-fix", post(repair))
        .route("/specs/{id}/check-trace", post(check_traces))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/choose", post(choose))
        .route("/sessions/{id}/events", get(session_events))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends, evicting idle sessions once a minute.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.evict_idle(Instant::now());
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

pub fn spec_id(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

async fn list_specs(State(st): State<AppState>) -> Json<Value> {
    let specs = st.inner.specs.read().expect("specs lock");
    let list: Vec<Value> = specs
        .iter()
        .map(|(id, e)| json!({ "specId": id, "operations": e.spec.operations.iter().map(|o| &o.name).collect::<Vec<_>>() }))
        .collect();
    Json(json!({ "specs": list }))
}

async fn create_spec(State(st): State<AppState>, body: String) -> Result<(StatusCode, Json<Value>), ApiError> {
    let spec = parse_spec(&body).map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        body: json!({ "error": e.to_string(), "line": e.line, "column": e.col }),
    })?;
    let diagnostics = validate_spec(&spec);
    let id = spec_id(&body);
    st.inner
        .specs
        .write()
        .expect("specs lock")
        .entry(id.clone())
        .or_insert_with(|| Arc::new(SpecEntry { spec: Arc::new(spec), net: OnceLock::new() }));
    Ok((StatusCode::CREATED, Json(json!({ "specId": id, "diagnostics": diagnostics }))))
}

#[derive(Deserialize)]
struct NetQuery {
    format: Option<String>,
}

async fn get_net(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<NetQuery>,
) -> Result<Response, ApiError> {
    let net = st.spec(&id)?.net()?;
    let text = |body: String| ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response();
    Ok(match q.format.as_deref().unwrap_or("clausal") {
        "clausal" => text(net.render_clausal()),
        "edges" => text(net.render_edges()),
        "dot" => text(net.render_dot()),
        "json" => ([(header::CONTENT_TYPE, "application/json")], net.render_json()).into_response(),
        other => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown format `{other}`"))),
    })
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct PlanRequest {
    goal: String,
    max_depth: Option<usize>,
    max_plans: Option<usize>,
}

async fn plan_goal(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<PlanRequest>,
) -> Result<Json<Value>, ApiError> {
    let spec = st.spec(&id)?.spec.clone();
    let goal = Goal::parse(&req.goal).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let depth = req.max_depth.unwrap_or(DEFAULT_MAX_DEPTH);
    let limit = req.max_plans.unwrap_or(DEFAULT_MAX_PLANS);
    let plans = tokio::task::spawn_blocking(move || {
        plan(&goal, &spec, depth)
            .take(limit)
            .map(|p| {
                let bindings: BTreeMap<String, String> = p.bindings.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
                json!({ "plan": p.plan.to_string(), "bindings": bindings })
            })
            .collect::<Vec<_>>()
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(json!({ "plans": plans })))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RepairRequest {
    plan: String,
    max_rounds: Option<usize>,
}

async fn repair(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<RepairRequest>,
) -> Result<Json<Value>, ApiError> {
    let spec = st.spec(&id)?.spec.clone();
    let given = Plan::parse(&req.plan, &spec).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let rounds = req.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS);
    let result = tokio::task::spawn_blocking(move || check_fix(&given, &spec, rounds))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match result {
        Ok((fixed, log)) => Ok(Json(json!({
            "plan": fixed.to_string(),
            "log": log.entries(),
            "transcript": log.transcript(),
        }))),
        Err(e) => {
            let log = match &e {
                RepairError::Unrepairable { log, .. } | RepairError::NonTerminating { log, .. } => log,
            };
            Err(ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": e.to_string(), "log": log.entries() }),
            })
        }
    }
}

async fn check_traces(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<Value>, ApiError> {
    let net = st.spec(&id)?.net()?;
    let mut traces: Vec<&str> = body.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if traces.is_empty() {
        traces.push("");
    }
    let verdicts: Vec<Value> = traces
        .iter()
        .map(|t| {
            let v = check_trace(&net, t);
            let mut obj = serde_json::to_value(&v).expect("verdict serializes");
            obj["trace"] = json!(t);
            obj["text"] = json!(v.to_string());
            obj
        })
        .collect();
    Ok(Json(json!({ "verdicts": verdicts })))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SessionView {
    session_id: String,
    spec_id: String,
    revision: u64,
    marking: Vec<String>,
    history: String,
    status: &'static str,
    options: Vec<Value>,
    plan_text: String,
}

fn status_name(s: &SessionStatus) -> &'static str {
    match s {
        SessionStatus::Running => "running",
        SessionStatus::AwaitingChoice { .. } => "awaitingChoice",
        SessionStatus::Completed => "completed",
        SessionStatus::Stuck => "stuck",
        SessionStatus::BudgetExceeded => "budgetExceeded",
        SessionStatus::Unsafe { .. } => "unsafe",
    }
}

fn view(id: &str, e: &SessionEntry) -> Value {
    let s = &e.session;
    let options = s
        .options()
        .iter()
        .map(|&l| json!({ "label": l, "name": s.net().transition(l).map(|t| t.name.as_str()).unwrap_or("") }))
        .collect();
    serde_json::to_value(SessionView {
        session_id: id.to_string(),
        spec_id: e.spec_id.clone(),
        revision: e.revision,
        marking: s.marking().tokens.iter().map(|p| p.to_string()).collect(),
        history: s.history().to_string(),
        status: status_name(s.status()),
        options,
        plan_text: s.plan_text(),
    })
    .expect("view serializes")
}

fn publish(id: &str, e: &SessionEntry) -> Value {
    let v = view(id, e);
    let _ = e.events.send(v.to_string());
    v
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateSession {
    spec_id: String,
}

async fn create_session(
    State(st): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let net = st.spec(&req.spec_id)?.net()?;
    let mut session = Session::start(net, st.config.max_firings)
        .map_err(|e| ApiError::new(StatusCode::CONFLICT, e.to_string()))?;
    session.advance();
    st.evict_idle(Instant::now());
    let id = {
        let mut n = st.inner.next_session.lock().expect("counter lock");
        *n += 1;
        format!("s{n}")
    };
    let (events, _) = broadcast::channel(16);
    let entry = SessionEntry { spec_id: req.spec_id, session, revision: 1, touched: Instant::now(), events };
    let v = publish(&id, &entry);
    st.inner.sessions.lock().expect("sessions lock").insert(id, entry);
    Ok((StatusCode::CREATED, Json(v)))
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    st.evict_idle(Instant::now());
    let mut sessions = st.inner.sessions.lock().expect("sessions lock");
    let e = sessions.get_mut(&id).ok_or_else(|| unknown_session(&id))?;
    e.touched = Instant::now();
    Ok(Json(view(&id, e)))
}

#[derive(Deserialize)]
struct ChooseRequest {
    label: String,
}

async fn choose(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ChooseRequest>,
) -> Result<Json<Value>, ApiError> {
    st.evict_idle(Instant::now());
    let mut sessions = st.inner.sessions.lock().expect("sessions lock");
    let e = sessions.get_mut(&id).ok_or_else(|| unknown_session(&id))?;
    e.touched = Instant::now();
    let mut chars = req.label.chars();
    let label = match (chars.next(), chars.next()) {
        (Some(c), None) => c,
        _ => return Err(ApiError::new(StatusCode::CONFLICT, format!("`{}` is not a single label", req.label))),
    };
    e.session.choose(label).map_err(|err: TokenError| ApiError::new(StatusCode::CONFLICT, err.to_string()))?;
    e.revision += 1;
    Ok(Json(publish(&id, e)))
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    st.inner.sessions.lock().expect("sessions lock").remove(&id).ok_or_else(|| unknown_session(&id))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn session_events(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let (first, rx) = {
        let sessions = st.inner.sessions.lock().expect("sessions lock");
        let e = sessions.get(&id).ok_or_else(|| unknown_session(&id))?;
        (view(&id, e).to_string(), e.events.subscribe())
    };
    let initial = stream::once(async move { Ok(Event::default().data(first)) });
    let updates = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(data) => return Some((Ok(Event::default().data(data)), rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(futures::StreamExt::chain(initial, updates)).keep_alive(KeepAlive::default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_ids_are_stable() {
        assert_eq!(spec_id("p(k).\n"), spec_id("p(k).\n"));
        assert_ne!(spec_id("p(k).\n"), spec_id("p(j).\n"));
        assert_eq!(spec_id("x").len(), 16);
    }

    #[test]
    fn idle_sessions_are_evicted() {
        let st = AppState::new(ServiceConfig { session_ttl: Duration::from_secs(1), ..ServiceConfig::default() });
        let spec = parse_spec(include_str!("../examples/request.scspec")).unwrap();
        let net = Arc::new(synthesize(&spec).unwrap());
        let (events, _) = broadcast::channel(1);
        let touched = Instant::now();
        let entry = SessionEntry { spec_id: "x".into(), session: Session::start(net, 10).unwrap(), revision: 1, touched, events };
        st.inner.sessions.lock().unwrap().insert("s1".into(), entry);
        assert_eq!(st.evict_idle(touched), 0);
        assert_eq!(st.evict_idle(touched + Duration::from_secs(5)), 1);
    }
}
