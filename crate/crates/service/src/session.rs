//! Session state, telemetry events and the wire types shared by the handlers.

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use mrguide_core::planner::StepRecord;
use mrguide_core::{AxisId, CarriagePose, Registration, Robot, RobotConfig, RobotParams, Valve};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

/// Per-axis snapshot on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSnapshot {
    pub axis: u8,
    pub name: String,
    pub position_mm: f64,
    pub encoder_mm: f64,
    pub valve: Valve,
}

impl AxisSnapshot {
    fn of(robot: &Robot, id: AxisId) -> Self {
        let a = robot.axis(id);
        Self {
            axis: id.number(),
            name: id.name().to_string(),
            position_mm: a.position(),
            encoder_mm: a.encoder(),
            valve: a.state().valve,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Telemetry,
    Started,
    Step,
    Completed,
    Aborted,
    Failed,
    Registered,
}

/// Progress of the executing (or last) plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProgress {
    pub handle: u64,
    pub goal: CarriagePose,
    pub iteration: usize,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Aborted,
    Failed,
}

/// One line of the step log as streamed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t: f64,
    pub t_end: f64,
    pub axis: u8,
    pub delta_mm: f64,
    pub moved_mm: f64,
    pub incline_deg: f64,
}

impl From<&StepRecord> for StepEvent {
    fn from(s: &StepRecord) -> Self {
        Self {
            t: s.t_start,
            t_end: s.t_end,
            axis: s.axis.number(),
            delta_mm: s.delta,
            moved_mm: s.moved,
            incline_deg: s.incline_deg,
        }
    }
}

/// Server-sent event payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    /// Simulated session time, s.
    pub t: f64,
    pub axes: Vec<AxisSnapshot>,
    pub pose: CarriagePose,
    pub incline_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanProgress>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<StepEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Registration as reported on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSummary {
    pub quaternion_wxyz: [f64; 4],
    pub rotation: [[f64; 3]; 3],
    pub translation_mm: [f64; 3],
    pub rotation_angle_deg: f64,
    pub rms_residual_mm: f64,
}

impl From<&Registration> for RegistrationSummary {
    fn from(r: &Registration) -> Self {
        let m = r.transform.rotation();
        let t = r.transform.translation();
        Self {
            quaternion_wxyz: r.transform.quaternion_wxyz(),
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])),
            translation_mm: [t.x, t.y, t.z],
            rotation_angle_deg: r.transform.angle().to_degrees(),
            rms_residual_mm: r.rms_residual,
        }
    }
}

/// Tunables fixed at startup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub robot: RobotConfig,
    /// Simulated seconds per wall second; 0 runs as fast as possible.
    pub time_scale: f64,
    /// Simulation step, s.
    pub dt: f64,
    /// Telemetry rate during motion, wall Hz.
    pub telemetry_hz: f64,
    pub seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            robot: RobotConfig::default(),
            time_scale: 10.0,
            dt: 0.05,
            telemetry_hz: 10.0,
            seed: 0,
        }
    }
}

pub(crate) struct ActivePlan {
    pub handle: u64,
    pub cancel: Arc<AtomicBool>,
}

/// Everything that changes while the service runs. Owned by one mutex.
pub struct Session {
    pub config: ServiceConfig,
    pub registration: Option<Registration>,
    pub robot: Robot,
    pub(crate) active: Option<ActivePlan>,
    pub progress: Option<PlanProgress>,
    pub steps: Vec<StepEvent>,
    pub plans: BTreeMap<u64, CarriagePose>,
    pub t: f64,
    seq: u64,
    next_id: u64,
    events: broadcast::Sender<Event>,
}

impl Session {
    pub fn new(config: ServiceConfig, events: broadcast::Sender<Event>) -> mrguide_core::Result<Self> {
        let home = config.robot.robot.home_pose();
        Ok(Self {
            robot: config.robot.robot_at(&home)?,
            config,
            registration: None,
            active: None,
            progress: None,
            steps: Vec::new(),
            plans: BTreeMap::new(),
            t: 0.0,
            seq: 0,
            next_id: 1,
            events,
        })
    }

    pub fn params(&self) -> &RobotParams {
        self.robot.params()
    }

    pub fn is_active(&self) -> bool {
        self.active.is_some()
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Builds the next event from the current state and publishes it.
    pub fn emit(&mut self, kind: EventKind, step: Option<StepEvent>, error: Option<String>) -> Event {
        self.seq += 1;
        let event = Event {
            seq: self.seq,
            kind,
            t: self.t,
            axes: AxisId::ALL.iter().map(|&id| AxisSnapshot::of(&self.robot, id)).collect(),
            pose: self.robot.pose(),
            incline_deg: self.robot.incline(),
            plan: self.progress.clone(),
            step,
            error,
        };
        // no subscribers is fine
        let _ = self.events.send(event.clone());
        event
    }

    pub fn snapshot(&self) -> StateView {
        StateView {
            seq: self.seq,
            t: self.t,
            robot: self.config.robot.robot,
            time_scale: self.config.time_scale,
            seed: self.config.seed,
            registration: self.registration.as_ref().map(RegistrationSummary::from),
            axes: AxisId::ALL.iter().map(|&id| AxisSnapshot::of(&self.robot, id)).collect(),
            pose: self.robot.pose(),
            encoder_pose: self.robot.encoder_pose(),
            incline_deg: self.robot.incline(),
            active: self.active.is_some(),
            plan: self.progress.clone(),
            steps: self.steps.clone(),
        }
    }
}

/// Body of `GET /state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub seq: u64,
    pub t: f64,
    pub robot: RobotParams,
    pub time_scale: f64,
    pub seed: u64,
    pub registration: Option<RegistrationSummary>,
    pub axes: Vec<AxisSnapshot>,
    pub pose: CarriagePose,
    pub encoder_pose: CarriagePose,
    pub incline_deg: f64,
    pub active: bool,
    pub plan: Option<PlanProgress>,
    pub steps: Vec<StepEvent>,
}
