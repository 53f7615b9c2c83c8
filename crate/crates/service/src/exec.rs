//! Background execution of one plan in scaled simulated time.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use mrguide_core::planner::{ExecOptions, Guard, PlanError, PlanExecutor, StepOutcome};
use mrguide_core::CarriagePose;

use crate::session::{ActivePlan, EventKind, PlanProgress, RunStatus, Session, StepEvent};

pub(crate) struct Started {
    pub handle: u64,
    pub goal: CarriagePose,
    executor: PlanExecutor,
    cancel: Arc<AtomicBool>,
}

/// Registers a new active plan. Caller holds the session lock.
pub(crate) fn start(s: &mut Session, goal: CarriagePose, guard: Guard) -> Result<Started, PlanError> {
    let options = ExecOptions {
        guard,
        dt: s.config.dt,
        ..ExecOptions::default()
    };
    let executor = PlanExecutor::new(goal, options, &s.robot)?;
    let handle = s.next_id();
    let cancel = Arc::new(AtomicBool::new(false));
    s.active = Some(ActivePlan {
        handle,
        cancel: cancel.clone(),
    });
    s.steps.clear();
    s.progress = Some(PlanProgress {
        handle,
        goal,
        iteration: 0,
        status: RunStatus::Running,
    });
    s.emit(EventKind::Started, None, None);
    Ok(Started {
        handle,
        goal,
        executor,
        cancel,
    })
}

fn lock(session: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    session.lock().unwrap_or_else(|p| p.into_inner())
}

/// Drives the plan to completion, publishing telemetry. Runs on a blocking thread.
pub(crate) fn run(session: Arc<Mutex<Session>>, started: Started) {
    let Started {
        mut executor, cancel, ..
    } = started;
    let (mut robot, scale, period, t0) = {
        let s = lock(&session);
        (s.robot.clone(), s.config.time_scale, 1.0 / s.config.telemetry_hz.max(1e-3), s.t)
    };
    let wall0 = Instant::now();
    let mut last_emit = Instant::now();

    let finish = |status: RunStatus, kind: EventKind, robot: &mrguide_core::Robot, error: Option<String>| {
        let mut s = lock(&session);
        s.robot = robot.clone();
        if let Some(p) = s.progress.as_mut() {
            p.status = status;
        }
        s.active = None;
        s.emit(kind, None, error);
    };

    loop {
        if cancel.load(Ordering::SeqCst) {
            finish(RunStatus::Aborted, EventKind::Aborted, &robot, None);
            return;
        }
        let result = executor.step(&mut robot, |r, elapsed| {
            if scale > 0.0 {
                let due = wall0 + Duration::from_secs_f64(elapsed / scale);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
            }
            if last_emit.elapsed().as_secs_f64() >= period {
                last_emit = Instant::now();
                let mut s = lock(&session);
                s.robot = r.clone();
                s.t = t0 + elapsed;
                s.emit(EventKind::Telemetry, None, None);
            }
        });
        match result {
            Ok(StepOutcome::Done) => {
                finish(RunStatus::Completed, EventKind::Completed, &robot, None);
                return;
            }
            Ok(StepOutcome::Stepped(rec)) => {
                let mut s = lock(&session);
                s.robot = robot.clone();
                s.t = t0 + executor.elapsed();
                let step = StepEvent::from(&rec);
                s.steps.push(step);
                if let Some(p) = s.progress.as_mut() {
                    p.iteration = executor.iterations();
                }
                s.emit(EventKind::Step, Some(step), None);
            }
            Err(e) => {
                robot.stop_all();
                finish(RunStatus::Failed, EventKind::Failed, &robot, Some(format!("{}: {e}", e.kind())));
                return;
            }
        }
    }
}
