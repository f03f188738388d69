//! HTTP/JSON facade over one scenario: read-only analysis artifacts plus
//! in-memory simulation sessions that a steering UI advances step by step.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State as AxState};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use infection_caps::policy::{advance, PolicyAdvice, SimOptions, TrajectorySample, Violation};
use infection_caps::scenario::ScenarioFile;
use infection_caps::{Analysis, Case, Membership, State};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

pub const MAX_SESSIONS: usize = 1024;
pub const MAX_DT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Manual,
    Policy,
}

#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub id: String,
    pub mode: Mode,
    pub current: State,
    pub clock: f64,
    pub history: Vec<TrajectorySample>,
    pub violation: Option<Violation>,
}

impl Session {
    fn new(id: String, mode: Mode, x0: State, u0: f64) -> Self {
        Session {
            id,
            mode,
            current: x0,
            clock: 0.0,
            history: vec![TrajectorySample {
                t: 0.0,
                x1: x0.x1,
                x2: x0.x2,
                u: u0,
            }],
            violation: None,
        }
    }
}

type SessionRef = Arc<Mutex<Session>>;

/// Sessions with least-recently-used eviction.
#[derive(Default)]
struct Sessions {
    map: HashMap<String, (u64, SessionRef)>,
    tick: u64,
    next_id: u64,
}

impl Sessions {
    fn insert(&mut self, make: impl FnOnce(String) -> Session) -> SessionRef {
        self.next_id += 1;
        let id = format!("s{:012x}", self.next_id);
        if self.map.len() >= MAX_SESSIONS {
            if let Some(oldest) = self.map.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| k.clone()) {
                self.map.remove(&oldest);
            }
        }
        self.tick += 1;
        let s = Arc::new(Mutex::new(make(id.clone())));
        self.map.insert(id, (self.tick, s.clone()));
        s
    }

    fn get(&mut self, id: &str) -> Option<SessionRef> {
        self.tick += 1;
        let tick = self.tick;
        self.map.get_mut(id).map(|(t, s)| {
            *t = tick;
            s.clone()
        })
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

pub struct AppState {
    pub scenario: ScenarioFile,
    pub analysis: Analysis,
    pub sim: SimOptions,
    sessions: Mutex<Sessions>,
}

impl AppState {
    pub fn new(scenario: ScenarioFile) -> infection_caps::Result<Self> {
        let analysis = Analysis::from_scenario(&scenario)?;
        let sim = scenario.settings.sim_options();
        Ok(AppState {
            scenario,
            analysis,
            sim,
            sessions: Mutex::new(Sessions::default()),
        })
    }

    pub fn session_count(&self) -> usize {
        lock(&self.sessions).len()
    }

    fn advise(&self, x: State) -> Result<PolicyAdvice, ApiError> {
        self.analysis
            .recommend(x, self.sim.eps)
            .map_err(|e| ApiError::bad_request(e.to_string()))
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<Violation>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            violation: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = AxState<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/scenario", get(scenario))
        .route("/api/classification", get(classification))
        .route("/api/regions", get(regions))
        .route("/api/barriers", get(barriers))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(get_session))
        .route("/api/session/{id}/step", post(step))
        .route("/api/session/{id}/reset", post(reset))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(scenario: ScenarioFile, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(scenario).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}

async fn scenario(AxState(st): Shared) -> Json<Value> {
    let s = &st.scenario;
    Json(json!({ "name": s.name, "model": s.model, "caps": s.caps, "settings": s.settings }))
}

async fn classification(AxState(st): Shared) -> Json<Value> {
    let cls = &st.analysis.classification;
    Json(json!({
        "case": cls.case,
        "active_face": cls.active_face,
        "boundary": cls.boundary,
        "audits": cls.audits,
        "path": cls.path(),
    }))
}

fn advisory(case: Case) -> &'static str {
    match case {
        Case::Comfortable => "minimal fumigation suffices everywhere in the box",
        Case::ComfortableViable => "minimal fumigation inside the robust set, maximal on the admissible barrier",
        Case::Viable => "maximal fumigation on the admissible barrier; no robust set exists",
        Case::Desperate => "desperate",
    }
}

async fn regions(AxState(st): Shared) -> Json<Value> {
    let r = &st.analysis.regions;
    Json(json!({
        "admissible": r.admissible,
        "mrpi": r.mrpi,
        "efficiency_ratio": r.efficiency_ratio,
        "advice": { "case": st.analysis.classification.case, "advisory": advisory(st.analysis.classification.case) },
    }))
}

async fn barriers(AxState(st): Shared) -> Json<Value> {
    let b = &st.analysis.barriers;
    Json(json!({ "admissible": b.admissible, "mrpi": b.mrpi }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    x0: [f64; 2],
    #[serde(default = "manual")]
    mode: Mode,
}

fn manual() -> Mode {
    Mode::Manual
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetBody {
    x0: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepBody {
    #[serde(default)]
    u: Option<f64>,
    dt: f64,
}

fn initial_state(x0: [f64; 2]) -> ApiResult<State> {
    let x = State::from(x0);
    if !x.is_finite() || !x.in_unit_square() {
        return Err(ApiError::bad_request(format!("x0 {x} must lie in the unit square")));
    }
    Ok(x)
}

#[derive(Serialize)]
struct Snapshot<'a> {
    id: &'a str,
    mode: Mode,
    t: f64,
    state: [f64; 2],
    advice: PolicyAdvice,
    violation: Option<Violation>,
}

fn snapshot<'a>(st: &AppState, s: &'a Session) -> ApiResult<Snapshot<'a>> {
    Ok(Snapshot {
        id: &s.id,
        mode: s.mode,
        t: s.clock,
        state: s.current.as_array(),
        advice: st.advise(s.current)?,
        violation: s.violation,
    })
}

async fn create_session(AxState(st): Shared, body: Result<Json<CreateBody>, JsonRejection>) -> ApiResult<Response> {
    let Json(body) = body?;
    let x0 = initial_state(body.x0)?;
    let advice = st.advise(x0)?;
    let u0 = match body.mode {
        Mode::Manual => st.analysis.params.u_min,
        Mode::Policy => advice.input(&st.analysis.params),
    };
    let session = lock(&st.sessions).insert(|id| Session::new(id, body.mode, x0, u0));
    let s = lock(&session);
    let out = serde_json::to_value(snapshot(&st, &s)?).expect("snapshot serializes");
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

fn find(st: &AppState, id: &str) -> ApiResult<SessionRef> {
    lock(&st.sessions).get(id).ok_or_else(|| ApiError::not_found(id))
}

async fn get_session(AxState(st): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = find(&st, &id)?;
    let s = lock(&session);
    let mut out = serde_json::to_value(snapshot(&st, &s)?).expect("snapshot serializes");
    out["history"] = serde_json::to_value(&s.history).expect("history serializes");
    Ok(Json(out))
}

async fn reset(
    AxState(st): Shared,
    Path(id): Path<String>,
    body: Result<Json<ResetBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let session = find(&st, &id)?;
    let Json(body) = body?;
    let x0 = initial_state(body.x0)?;
    let mut s = lock(&session);
    let u0 = match s.mode {
        Mode::Manual => st.analysis.params.u_min,
        Mode::Policy => st.advise(x0)?.input(&st.analysis.params),
    };
    *s = Session::new(s.id.clone(), s.mode, x0, u0);
    Ok(Json(
        serde_json::to_value(snapshot(&st, &s)?).expect("snapshot serializes"),
    ))
}

#[derive(Serialize)]
struct StepResponse<'a> {
    #[serde(flatten)]
    snapshot: Snapshot<'a>,
    u: f64,
    clamped: bool,
    membership: MembershipPair,
    samples: &'a [TrajectorySample],
}

#[derive(Serialize)]
struct MembershipPair {
    admissible: Membership,
    mrpi: Membership,
}

async fn step(
    AxState(st): Shared,
    Path(id): Path<String>,
    body: Result<Json<StepBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let session = find(&st, &id)?;
    let Json(body) = body?;
    if !(body.dt > 0.0 && body.dt <= MAX_DT) {
        return Err(ApiError::bad_request(format!("dt must lie in (0, {MAX_DT}] days")));
    }
    let p = &st.analysis.params;
    let mut s = lock(&session);
    if let Some(v) = s.violation {
        let mut err = ApiError::new(
            StatusCode::CONFLICT,
            "violated",
            format!("the {} cap was violated at t = {}; reset the session", v.face, v.t),
        );
        err.violation = Some(v);
        return Err(err);
    }
    let requested = match (s.mode, body.u) {
        (Mode::Policy, _) => st.advise(s.current)?.input(p),
        (Mode::Manual, Some(u)) if u.is_finite() => u,
        (Mode::Manual, Some(_)) => return Err(ApiError::bad_request("u must be finite")),
        (Mode::Manual, None) => return Err(ApiError::bad_request("manual sessions need u")),
    };
    let u = p.clamp_input(requested);
    let clamped = u != requested;
    let tr = advance(p, &st.analysis.caps, s.current, u, body.dt, &st.sim)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let clock = s.clock;
    let first_new = s.history.len();
    s.history.extend(
        tr.samples[1..]
            .iter()
            .map(|x| TrajectorySample { t: clock + x.t, ..*x }),
    );
    s.violation = tr.violation.map(|v| Violation { t: clock + v.t, ..v });
    s.clock = clock + body.dt;
    s.current = tr.last_state();
    let advice = st.advise(s.current)?;
    let out = StepResponse {
        snapshot: snapshot(&st, &s)?,
        u,
        clamped,
        membership: MembershipPair {
            admissible: advice.admissible,
            mrpi: advice.mrpi,
        },
        samples: &s.history[first_new..],
    };
    Ok(Json(serde_json::to_value(out).expect("step serializes")))
}
