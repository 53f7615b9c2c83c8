//! HTTP control service for the simulated robot: registration, planning,
//! sequential execution and server-sent telemetry.
//!
//! | method | path            | body                          |
//! |--------|-----------------|-------------------------------|
//! | POST   | `/registration` | `{"pairs": [{"mr", "robot"}]}` |
//! | POST   | `/plan`         | `{"entry", "target", "frame"}` |
//! | POST   | `/execute`      | `{"plan_id"}` or `{"pose"}`    |
//! | POST   | `/abort`        |                               |
//! | GET    | `/state`        |                               |
//! | GET    | `/events`       | SSE, one JSON object per event |

mod exec;
mod session;

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use mrguide_core::kinematics::carriage_positions;
use mrguide_core::planner::Guard;
use mrguide_core::{
    fit_rigid_transform, incline_angle, CarriagePose, FiducialPair, FiducialSet, Frame, KinematicsError, TargetPlan,
};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

pub use session::{
    AxisSnapshot, Event, EventKind, PlanProgress, RegistrationSummary, RunStatus, ServiceConfig, Session, StateView,
    StepEvent,
};

/// Shared handle: the session mutex plus the telemetry channel.
#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    events: broadcast::Sender<Event>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> mrguide_core::Result<Self> {
        config.robot.validate()?;
        let (events, _) = broadcast::channel(4096);
        let session = Session::new(config, events.clone())?;
        Ok(Self {
            session: Arc::new(Mutex::new(session)),
            events,
        })
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    pub fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Publishes a telemetry snapshot at the configured rate while no plan runs.
    /// During execution the executor publishes instead.
    pub fn spawn_heartbeat(&self) -> tokio::task::JoinHandle<()> {
        let app = self.clone();
        let hz = self.lock().config.telemetry_hz.max(1e-3);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(std::time::Duration::from_secs_f64(1.0 / hz));
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            loop {
                tick.tick().await;
                let mut s = app.lock();
                if !s.is_active() {
                    s.emit(EventKind::Telemetry, None, None);
                }
            }
        })
    }
}

/// Error body: `{"error": kind, "message": text, ...details}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl ToString) -> Self {
        Self {
            status,
            body: json!({"error": kind, "message": message.to_string()}),
        }
    }

    fn with(mut self, key: &str, value: serde_json::Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidJson", e.body_text())
    }
}

fn unprocessable(kind: &str, message: impl ToString) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, kind, message)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/registration", post(register))
        .route("/plan", post(plan))
        .route("/execute", post(execute))
        .route("/abort", post(abort))
        .route("/state", get(get_state))
        .route("/events", get(events))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(config).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let heartbeat = state.spawn_heartbeat();
    let served = axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    heartbeat.abort();
    served
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct FiducialsBody {
    pub pairs: Vec<FiducialPair>,
}

async fn register(
    State(app): State<AppState>,
    body: Result<Json<FiducialsBody>, JsonRejection>,
) -> Result<Json<RegistrationSummary>, ApiError> {
    let Json(raw) = body?;
    let set = FiducialSet::new(raw.pairs).map_err(|e| unprocessable(e.kind(), &e))?;
    let reg = fit_rigid_transform(&set).map_err(|e| unprocessable(e.kind(), &e))?;
    let summary = RegistrationSummary::from(&reg);
    let mut s = app.lock();
    s.registration = Some(reg);
    s.emit(EventKind::Registered, None, None);
    Ok(Json(summary))
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
pub struct PlanRequest {
    pub entry: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "robot_frame")]
    pub frame: Frame,
}

fn robot_frame() -> Frame {
    Frame::Robot
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResponse {
    pub plan_id: u64,
    pub pose: CarriagePose,
    pub incline_deg: f64,
    pub within_travel: bool,
    pub within_incline: bool,
    pub feasible: bool,
    /// Entry, upper bearing, lower bearing, target; robot frame, mm.
    pub path: Vec<[f64; 3]>,
    pub entry_robot: [f64; 3],
    pub target_robot: [f64; 3],
}

fn arr(p: &Point3<f64>) -> [f64; 3] {
    [p.x, p.y, p.z]
}

async fn plan(
    State(app): State<AppState>,
    body: Result<Json<PlanRequest>, JsonRejection>,
) -> Result<Json<PlanResponse>, ApiError> {
    let Json(req) = body?;
    let mut s = app.lock();
    let (entry, target) = {
        let e = Point3::from(req.entry);
        let t = Point3::from(req.target);
        match req.frame {
            Frame::Robot => (e, t),
            Frame::Mr => {
                let reg = s
                    .registration
                    .as_ref()
                    .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "NoRegistration", "no registration stored"))?;
                (reg.transform.apply_point(&e), reg.transform.apply_point(&t))
            }
            Frame::Plane(_) => return Err(unprocessable("FrameMismatch", "plans must be given in robot or mr frame")),
        }
    };
    let params = *s.params();
    let plan = TargetPlan::robot(entry, target);
    let pose = carriage_positions(&plan, &params).map_err(|e| unprocessable(e.kind(), &e))?;
    let incline = incline_angle(&pose, &params);
    let within_travel = pose.within_travel(&params, 0.0);
    let within_incline = incline <= params.max_incline_deg;
    let flags = |err: ApiError| {
        err.with("pose", json!(pose))
            .with("incline_deg", json!(incline))
            .with("within_travel", json!(within_travel))
            .with("within_incline", json!(within_incline))
    };
    if let Err(e) = pose.check_limits(&params) {
        let err = unprocessable(e.kind(), &e);
        let err = match e {
            KinematicsError::OutOfTravel { axis, value, min, max } => err
                .with("axis", json!(axis.number()))
                .with("value_mm", json!(value))
                .with("min_mm", json!(min))
                .with("max_mm", json!(max)),
            KinematicsError::InclineExceeded { incline_deg, limit_deg } => {
                err.with("value_deg", json!(incline_deg)).with("limit_deg", json!(limit_deg))
            }
            _ => err,
        };
        return Err(flags(err));
    }
    let id = s.next_id();
    s.plans.insert(id, pose);
    Ok(Json(PlanResponse {
        plan_id: id,
        pose,
        incline_deg: incline,
        within_travel,
        within_incline,
        feasible: true,
        path: vec![
            arr(&entry),
            arr(&pose.upper_point(&params)),
            arr(&pose.lower_point(&params)),
            arr(&target),
        ],
        entry_robot: arr(&entry),
        target_robot: arr(&target),
    }))
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
pub struct ExecuteRequest {
    pub plan_id: Option<u64>,
    pub pose: Option<CarriagePose>,
    #[serde(default)]
    pub guard: Guard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecuteResponse {
    pub handle: u64,
    pub goal: CarriagePose,
}

async fn execute(
    State(app): State<AppState>,
    body: Result<Json<ExecuteRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<ExecuteResponse>), ApiError> {
    let Json(req) = body?;
    let started = {
        let mut s = app.lock();
        if s.is_active() {
            return Err(ApiError::new(StatusCode::CONFLICT, "PlanActive", "a plan is already executing"));
        }
        let goal = match (req.plan_id, req.pose) {
            (Some(id), None) => *s
                .plans
                .get(&id)
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownPlan", format!("no plan {id}")))?,
            (None, Some(pose)) => pose,
            _ => return Err(unprocessable("InvalidRequest", "give exactly one of plan_id and pose")),
        };
        goal.check_limits(s.params()).map_err(|e| unprocessable(e.kind(), &e))?;
        exec::start(&mut s, goal, req.guard).map_err(|e| unprocessable(e.kind(), &e))?
    };
    let handle = started.handle;
    let goal = started.goal;
    let session = app.session.clone();
    tokio::task::spawn_blocking(move || exec::run(session, started));
    Ok((StatusCode::ACCEPTED, Json(ExecuteResponse { handle, goal })))
}

async fn abort(State(app): State<AppState>) -> Json<serde_json::Value> {
    let s = app.lock();
    let aborting = match &s.active {
        Some(a) => {
            a.cancel.store(true, Ordering::SeqCst);
            Some(a.handle)
        }
        None => None,
    };
    Json(json!({"aborting": aborting.is_some(), "handle": aborting}))
}

async fn get_state(State(app): State<AppState>) -> Json<StateView> {
    Json(app.lock().snapshot())
}

async fn events(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let rx = app.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let data = serde_json::to_string(&ev).unwrap_or_default();
                    return Some((Ok(SseEvent::default().id(ev.seq.to_string()).data(data)), rx));
                }
                // a slow reader skips ahead; sequence numbers expose the gap
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
