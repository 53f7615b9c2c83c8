//! Sequential single-axis motion strategy.
//!
//! Only one pneumatic motor can run at a time. Each loop iteration alternates
//! between the x axes (1 and 3) and the y axes (2 and 4), moves whichever of the
//! pair has the larger error by at most 5 mm towards its goal, and lets the
//! bang-bang controller settle before the next iteration.
//!
//! The printed strategy has no incline check of its own, and alternating 5 mm
//! moves of one carriage can push the guide past the bearing limit. With
//! [`Guard::On`] each step is shortened to the largest move that keeps the
//! predicted settled incline inside the limit.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::{Axis, AxisError, AxisParams, AxisState, Valve, DEFAULT_SETTLE_TIMEOUT_S};
use crate::kinematics::{incline_angle, AxisId, CarriagePose, KinematicsError, RobotParams};

/// Largest single commanded move, mm.
pub const MAX_STEP_MM: f64 = 5.0;

/// Consecutive iterations without motion before a guarded plan reports a stall
/// (two full parity cycles).
pub const STALL_ITERATIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no progress on any axis for {STALL_ITERATIONS} iterations at {pose:?}")]
    Stalled { pose: CarriagePose, iterations: usize },
    #[error("plan did not finish within {iterations} iterations")]
    Timeout { iterations: usize },
    #[error("invalid goal: {0}")]
    InvalidGoal(#[from] KinematicsError),
    #[error(transparent)]
    Axis(#[from] AxisError),
}

impl PlanError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlanError::Stalled { .. } => "Stalled",
            PlanError::Timeout { .. } => "Timeout",
            PlanError::InvalidGoal(e) => e.kind(),
            PlanError::Axis(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    #[default]
    On,
    Off,
}

/// Loop variables of the strategy: parity bit and the latest per-axis errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanState {
    pub parity: u8,
    /// Goal minus measured position, axis order 1..4.
    pub errors: [f64; 4],
    pub log: Vec<(AxisId, f64)>,
}

impl PlanState {
    pub fn new(errors: [f64; 4]) -> Self {
        Self {
            parity: 0,
            errors,
            log: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanStep {
    /// Move `axis` by `delta` mm. `delta` is zero when both axes of the active
    /// pair are already in position.
    Move { axis: AxisId, delta: f64 },
    Done,
}

/// One iteration of the strategy.
///
/// Errors whose magnitude is within the axis stop threshold count as zero.
/// Returns `Done` (leaving the parity alone) once every axis is in position;
/// otherwise picks the axis, logs it and flips the parity.
pub fn plan_step(state: &mut PlanState, thresholds: &[f64; 4]) -> PlanStep {
    let e: [f64; 4] = std::array::from_fn(|i| {
        if state.errors[i].abs() <= thresholds[i] {
            0.0
        } else {
            state.errors[i]
        }
    });
    if e.iter().all(|v| *v == 0.0) {
        return PlanStep::Done;
    }
    let (a, b) = if state.parity == 0 {
        (AxisId::UpperX, AxisId::LowerX)
    } else {
        (AxisId::UpperY, AxisId::LowerY)
    };
    let (ea, eb) = (e[a.index()], e[b.index()]);
    let d = ea.abs().max(eb.abs()).min(MAX_STEP_MM);
    // ties go to the lower-carriage axis
    let (axis, err) = if ea.abs() > eb.abs() { (a, ea) } else { (b, eb) };
    let delta = if err == 0.0 { 0.0 } else { d * err.signum() };
    state.parity = 1 - state.parity;
    state.log.push((axis, delta));
    PlanStep::Move { axis, delta }
}

/// The four simulated axes together with the robot geometry.
#[derive(Debug, Clone)]
pub struct Robot {
    params: RobotParams,
    axes: [Axis; 4],
}

impl Robot {
    pub fn new(params: RobotParams, axis_params: [AxisParams; 4], pose: &CarriagePose) -> Self {
        let axes = std::array::from_fn(|i| Axis::new(axis_params[i], pose.to_array()[i]));
        Self { params, axes }
    }

    pub fn params(&self) -> &RobotParams {
        &self.params
    }

    pub fn axis(&self, id: AxisId) -> &Axis {
        &self.axes[id.index()]
    }

    pub fn axis_mut(&mut self, id: AxisId) -> &mut Axis {
        &mut self.axes[id.index()]
    }

    pub fn states(&self) -> [AxisState; 4] {
        std::array::from_fn(|i| *self.axes[i].state())
    }

    /// Ground-truth carriage positions.
    pub fn pose(&self) -> CarriagePose {
        CarriagePose::from_array(std::array::from_fn(|i| self.axes[i].position()))
    }

    /// Carriage positions as seen by the encoders.
    pub fn encoder_pose(&self) -> CarriagePose {
        CarriagePose::from_array(std::array::from_fn(|i| self.axes[i].encoder()))
    }

    pub fn incline(&self) -> f64 {
        incline_angle(&self.pose(), &self.params)
    }

    pub fn thresholds(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.axes[i].params().config.stop_threshold)
    }

    /// Number of axes currently moving or with an open valve.
    pub fn active_axes(&self) -> usize {
        self.axes.iter().filter(|a| !a.state().is_stationary()).count()
    }

    pub fn tick(&mut self, dt: f64) -> Result<(), AxisError> {
        for a in &mut self.axes {
            a.tick(dt)?;
        }
        Ok(())
    }

    /// Closes every valve.
    pub fn stop_all(&mut self) {
        for a in &mut self.axes {
            a.stop();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecOptions {
    pub guard: Guard,
    /// Simulation step, s.
    pub dt: f64,
    pub settle_timeout_s: f64,
    pub max_iterations: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            guard: Guard::On,
            dt: 0.05,
            settle_timeout_s: DEFAULT_SETTLE_TIMEOUT_S,
            max_iterations: 500,
        }
    }
}

/// One executed iteration of the strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub parity: u8,
    pub axis: AxisId,
    /// Move chosen by the strategy.
    pub requested_delta: f64,
    /// Move sent to the axis after guarding.
    pub delta: f64,
    /// Simulated time at which the step started.
    pub t_start: f64,
    pub t_end: f64,
    /// Encoder displacement actually produced.
    pub moved: f64,
    /// Incline of the settled (ground-truth) pose.
    pub incline_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoveResult {
    pub reached: bool,
    pub cancelled: bool,
    pub steps: Vec<StepRecord>,
    pub iterations: usize,
    /// Largest ground-truth incline seen at any tick.
    pub max_transient_incline: f64,
    pub elapsed_s: f64,
    pub final_pose: CarriagePose,
    pub final_encoder_pose: CarriagePose,
}

/// Result of one call to [`PlanExecutor::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Done,
    Stepped(StepRecord),
}

/// Incrementally executes the strategy against a [`Robot`], one iteration at a time.
#[derive(Debug, Clone)]
pub struct PlanExecutor {
    goal: CarriagePose,
    options: ExecOptions,
    state: PlanState,
    steps: Vec<StepRecord>,
    elapsed: f64,
    max_incline: f64,
    idle_iterations: usize,
    /// The last guarded step could not move at all.
    blocked: bool,
}

impl PlanExecutor {
    pub fn new(goal: CarriagePose, options: ExecOptions, robot: &Robot) -> Result<Self, PlanError> {
        goal.check_limits(robot.params())?;
        if !(options.dt > 0.0 && options.dt <= crate::axis::MAX_DT) {
            return Err(AxisError::InvalidStep(options.dt).into());
        }
        Ok(Self {
            goal,
            options,
            state: PlanState::default(),
            steps: Vec::new(),
            elapsed: 0.0,
            max_incline: robot.incline(),
            idle_iterations: 0,
            blocked: false,
        })
    }

    pub fn goal(&self) -> &CarriagePose {
        &self.goal
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    fn errors(&self, robot: &Robot) -> [f64; 4] {
        let seen = robot.encoder_pose().to_array();
        let goal = self.goal.to_array();
        std::array::from_fn(|i| goal[i] - seen[i])
    }

    /// Largest setpoint move of `axis` in the direction of `delta` (up to `|delta|`)
    /// whose predicted settled incline stays within the limit. Zero when the
    /// only safe moves are too short to open the valve.
    fn guard_delta(&self, robot: &Robot, axis: AxisId, delta: f64) -> f64 {
        if delta == 0.0 {
            return 0.0;
        }
        let params = robot.params();
        let ap = robot.axis(axis).params();
        let valve = if delta > 0.0 { Valve::Forward } else { Valve::Reverse };
        let h = ap.half_count();
        let thr = ap.config.stop_threshold;
        // the valve closes (thr - h) short of the setpoint, then the carriage coasts
        let excess = ap.coast_distance(valve) - (thr - h);
        // encoder rounding on the moving axis and on the other carriage
        let limit = (params.max_relative_displacement() - 3.0 * h).max(0.0);

        let v = robot.encoder_pose().relative_displacement();
        let (vk, vo) = if axis.is_x() { (v.x, v.y) } else { (v.y, v.x) };
        // moving an upper carriage adds to the offset, a lower one subtracts
        let u = if axis.is_upper() { delta.signum() } else { -delta.signum() };
        let b = u * vk;
        let norm_sq = vk * vk + vo * vo;
        let travel_max = if norm_sq <= limit * limit {
            // largest root of t^2 + 2bt + (|v|^2 - r^2) = 0
            -b + (b * b - (norm_sq - limit * limit)).max(0.0).sqrt()
        } else {
            // already outside: allow moves that do not increase the offset
            (-2.0 * b).max(0.0)
        };
        let allowed = (travel_max - excess).min(delta.abs());
        if allowed <= thr {
            0.0
        } else {
            delta.signum() * allowed
        }
    }

    /// Setpoint move that brings `axis` from inside its deadband onto its goal:
    /// the setpoint is pushed past the goal by the distance the carriage stops
    /// short. Zero unless the move shrinks the bearing offset and passes the guard.
    fn nudge(&self, robot: &Robot, axis: AxisId) -> f64 {
        let err = self.state.errors[axis.index()];
        if err == 0.0 {
            return 0.0;
        }
        let v = robot.encoder_pose().relative_displacement();
        let vk = if axis.is_x() { v.x } else { v.y };
        let u = if axis.is_upper() { err.signum() } else { -err.signum() };
        if u * vk >= 0.0 {
            return 0.0;
        }
        let ap = robot.axis(axis).params();
        let valve = if err > 0.0 { Valve::Forward } else { Valve::Reverse };
        let shortfall = ap.config.stop_threshold - ap.half_count() - ap.coast_distance(valve);
        let d = err + err.signum() * shortfall;
        if d * err <= 0.0 {
            return 0.0;
        }
        let guarded = self.guard_delta(robot, axis, d);
        if guarded == d {
            d
        } else {
            0.0
        }
    }

    /// Runs one iteration: choose an axis, guard the move, settle it.
    /// `observe` is called after every simulation tick.
    pub fn step<F>(&mut self, robot: &mut Robot, mut observe: F) -> Result<StepOutcome, PlanError>
    where
        F: FnMut(&Robot, f64),
    {
        if self.steps.len() >= self.options.max_iterations {
            return Err(PlanError::Timeout {
                iterations: self.steps.len(),
            });
        }
        self.state.errors = self.errors(robot);
        let parity = self.state.parity;
        let thresholds = robot.thresholds();
        let (mut axis, mut requested) = match plan_step(&mut self.state, &thresholds) {
            PlanStep::Done => return Ok(StepOutcome::Done),
            PlanStep::Move { axis, delta } => (axis, delta),
        };
        let delta = match self.options.guard {
            Guard::On => {
                let mut delta = self.guard_delta(robot, axis, requested);
                if delta == 0.0 && requested != 0.0 {
                    // blocked: let the other carriage on the same coordinate take the step
                    let partner = axis.partner();
                    let err = self.state.errors[partner.index()];
                    if err.abs() > thresholds[partner.index()] {
                        let alt = err.clamp(-MAX_STEP_MM, MAX_STEP_MM);
                        let alt_delta = self.guard_delta(robot, partner, alt);
                        if alt_delta != 0.0 {
                            (axis, requested, delta) = (partner, alt, alt_delta);
                        }
                    }
                } else if requested == 0.0 && self.blocked {
                    // both axes here sit in their deadbands while the other pair is
                    // blocked; settling one onto its goal can free incline room
                    let best = [axis, axis.partner()]
                        .into_iter()
                        .map(|a| (a, self.nudge(robot, a)))
                        .filter(|(_, d)| *d != 0.0)
                        .max_by(|p, q| p.1.abs().total_cmp(&q.1.abs()));
                    if let Some((a, d)) = best {
                        (axis, requested, delta) = (a, d, d);
                    }
                }
                if let Some(last) = self.state.log.last_mut() {
                    *last = (axis, requested);
                }
                self.blocked = requested != 0.0 && delta == 0.0;
                delta
            }
            Guard::Off => requested,
        };

        let t_start = self.elapsed;
        let before = robot.axis(axis).encoder();
        if delta != 0.0 {
            let (min, max) = robot.axis(axis).params().travel;
            let goal = self.goal.get(axis);
            // final approach targets the goal itself so exact axes land on it bit for bit
            let target = if (before + delta - goal).abs() < 1e-9 { goal } else { before + delta };
            let target = target.clamp(min, max);
            let dt = self.options.dt;
            robot.axis_mut(axis).command_setpoint(target)?;
            let mut ticks = 0u64;
            while !robot.axis(axis).state().is_stationary() {
                if ticks as f64 * dt >= self.options.settle_timeout_s {
                    robot.stop_all();
                    return Err(AxisError::Timeout {
                        limit_s: self.options.settle_timeout_s,
                    }
                    .into());
                }
                robot.tick(dt)?;
                ticks += 1;
                self.elapsed = t_start + ticks as f64 * dt;
                self.max_incline = self.max_incline.max(robot.incline());
                observe(robot, self.elapsed);
            }
        }
        let moved = robot.axis(axis).encoder() - before;
        let record = StepRecord {
            iteration: self.steps.len(),
            parity,
            axis,
            requested_delta: requested,
            delta,
            t_start,
            t_end: self.elapsed,
            moved,
            incline_deg: robot.incline(),
        };
        self.steps.push(record);

        if moved.abs() > 0.0 {
            self.idle_iterations = 0;
        } else {
            self.idle_iterations += 1;
            if self.options.guard == Guard::On && self.idle_iterations >= STALL_ITERATIONS {
                return Err(PlanError::Stalled {
                    pose: robot.encoder_pose(),
                    iterations: self.steps.len(),
                });
            }
            if self.idle_iterations >= STALL_ITERATIONS * 4 {
                return Err(PlanError::Stalled {
                    pose: robot.encoder_pose(),
                    iterations: self.steps.len(),
                });
            }
        }
        Ok(StepOutcome::Stepped(record))
    }

    pub fn finish(self, robot: &Robot, reached: bool, cancelled: bool) -> MoveResult {
        MoveResult {
            reached,
            cancelled,
            iterations: self.steps.len(),
            steps: self.steps,
            max_transient_incline: self.max_incline,
            elapsed_s: self.elapsed,
            final_pose: robot.pose(),
            final_encoder_pose: robot.encoder_pose(),
        }
    }
}

/// Drives `robot` to `goal` with the sequential strategy.
///
/// `cancel` is polled between iterations; a cancelled run returns with
/// `reached == false` and `cancelled == true`.
pub fn execute_plan(
    goal: &CarriagePose,
    robot: &mut Robot,
    options: ExecOptions,
    cancel: Option<&AtomicBool>,
) -> Result<MoveResult, PlanError> {
    let mut exec = PlanExecutor::new(*goal, options, robot)?;
    loop {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Ok(exec.finish(robot, false, true));
        }
        match exec.step(robot, |_, _| {})? {
            StepOutcome::Done => return Ok(exec.finish(robot, true, false)),
            StepOutcome::Stepped(_) => {}
        }
    }
}

/// Writes the step log as JSON lines `{"t", "axis", "delta_mm", "incline_deg"}`.
pub fn write_step_log<W: std::io::Write>(steps: &[StepRecord], mut out: W) -> std::io::Result<()> {
    for s in steps {
        let line = serde_json::json!({
            "t": s.t_start,
            "axis": s.axis.number(),
            "delta_mm": s.delta,
            "incline_deg": s.incline_deg,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Dry run of the strategy on exact axes: the sequence of moves the strategy
/// would command from `start` to `goal` if every move landed exactly.
pub fn preview_plan(start: &CarriagePose, goal: &CarriagePose, max_iterations: usize) -> Vec<(AxisId, f64)> {
    let mut pos = start.to_array();
    let g = goal.to_array();
    let mut state = PlanState::default();
    for _ in 0..max_iterations {
        state.errors = std::array::from_fn(|i| g[i] - pos[i]);
        match plan_step(&mut state, &[0.0; 4]) {
            PlanStep::Done => break,
            PlanStep::Move { axis, delta } => {
                // land exactly on the goal on the final move of an axis
                pos[axis.index()] = if (g[axis.index()] - pos[axis.index()]).abs() <= MAX_STEP_MM {
                    g[axis.index()]
                } else {
                    pos[axis.index()] + delta
                };
            }
        }
    }
    state.log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::AxesConfig;

    fn robot_at(pose: CarriagePose, axes: AxesConfig) -> Robot {
        let params = RobotParams::default();
        Robot::new(params, axes.build(&params).unwrap(), &pose)
    }

    #[test]
    fn done_when_in_position() {
        let mut s = PlanState::new([0.0; 4]);
        assert_eq!(plan_step(&mut s, &[0.0; 4]), PlanStep::Done);
        let mut s = PlanState::new([0.2, -0.5, 0.1, 0.59]);
        assert_eq!(plan_step(&mut s, &[0.3, 0.6, 0.3, 0.6]), PlanStep::Done);
    }

    #[test]
    fn hand_executed_sequence() {
        // exact execution of (12, 0, 3, 0): odd iterations have nothing to do
        let mut s = PlanState::new([12.0, 0.0, 3.0, 0.0]);
        let mut moves = Vec::new();
        let mut iterations = 0;
        while let PlanStep::Move { axis, delta } = plan_step(&mut s, &[0.0; 4]) {
            iterations += 1;
            s.errors[axis.index()] -= delta;
            moves.push((axis.number(), delta));
        }
        assert_eq!(
            moves,
            vec![(1, 5.0), (4, 0.0), (1, 5.0), (4, 0.0), (3, 3.0), (4, 0.0), (1, 2.0)]
        );
        assert_eq!(iterations, 7);
    }

    #[test]
    fn larger_lower_error_wins() {
        let mut s = PlanState::new([2.0, 0.0, -4.0, 0.0]);
        assert_eq!(
            plan_step(&mut s, &[0.0; 4]),
            PlanStep::Move {
                axis: AxisId::LowerX,
                delta: -4.0
            }
        );
        assert_eq!(s.parity, 1);
    }

    #[test]
    fn ties_pick_lower_axis() {
        let mut s = PlanState::new([0.0, 3.0, 0.0, -3.0]);
        s.parity = 1;
        assert_eq!(
            plan_step(&mut s, &[0.0; 4]),
            PlanStep::Move {
                axis: AxisId::LowerY,
                delta: -3.0
            }
        );
    }

    #[test]
    fn start_equals_goal() {
        let pose = CarriagePose::new(3.0, -2.0, 1.0, 4.0);
        let mut robot = robot_at(pose, AxesConfig::default());
        let res = execute_plan(&pose, &mut robot, ExecOptions::default(), None).unwrap();
        assert!(res.reached);
        assert!(res.steps.is_empty());
    }

    #[test]
    fn guard_truncates_incline_increase() {
        // the upper carriage ends 26 mm ahead in x while both y axes travel 20 mm;
        // interleaved y moves open a 5 mm y offset on top of the x offset
        let start = CarriagePose::new(0.0, -10.0, 0.0, -10.0);
        let goal = CarriagePose::new(26.0, 10.0, 0.0, 10.0);
        let axes = AxesConfig::ideal();
        let opts = ExecOptions::default();

        let mut guarded = robot_at(start, axes);
        let g = execute_plan(&goal, &mut guarded, opts, None).unwrap();
        assert!(g.reached);
        assert!(g.max_transient_incline <= 30.0 + 1e-9, "{}", g.max_transient_incline);

        let mut literal = robot_at(start, axes);
        let l = execute_plan(&goal, &mut literal, ExecOptions { guard: Guard::Off, ..opts }, None).unwrap();
        assert!(l.reached);
        assert!(l.max_transient_incline > 30.0, "{}", l.max_transient_incline);
    }

    #[test]
    fn rejects_infeasible_goal() {
        let mut robot = robot_at(CarriagePose::new(0.0, 0.0, 0.0, 0.0), AxesConfig::default());
        let err = execute_plan(
            &CarriagePose::new(27.0, 0.0, -27.0, 0.0),
            &mut robot,
            ExecOptions::default(),
            None,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "InclineExceeded");
    }

    #[test]
    fn cancel_before_first_step() {
        let flag = AtomicBool::new(true);
        let mut robot = robot_at(CarriagePose::new(0.0, 0.0, 0.0, 0.0), AxesConfig::default());
        let res = execute_plan(
            &CarriagePose::new(10.0, 0.0, 10.0, 0.0),
            &mut robot,
            ExecOptions::default(),
            Some(&flag),
        )
        .unwrap();
        assert!(res.cancelled && !res.reached);
        assert!(res.steps.is_empty());
    }

    #[test]
    fn stalls_when_translation_needs_offset_room() {
        // offset pinned at the incline limit in y; translating x needs a transient
        // x offset that the guard cannot grant
        let r = RobotParams::default().max_relative_displacement();
        let start = CarriagePose::new(-10.0, 15.0, -10.0, 15.0 - r);
        let goal = CarriagePose::new(10.0, 15.0, 10.0, 15.0 - r);
        let mut robot = robot_at(start, AxesConfig::ideal());
        let err = execute_plan(&goal, &mut robot, ExecOptions::default(), None).unwrap_err();
        assert_eq!(err.kind(), "Stalled");
    }

    #[test]
    fn step_log_json_lines() {
        let start = CarriagePose::new(0.0, 0.0, 0.0, 0.0);
        let goal = CarriagePose::new(7.0, 0.0, 0.0, 0.0);
        let mut robot = robot_at(start, AxesConfig::ideal());
        let res = execute_plan(&goal, &mut robot, ExecOptions::default(), None).unwrap();
        let mut buf = Vec::new();
        write_step_log(&res.steps, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["axis"], 1);
        assert_eq!(first["delta_mm"], 5.0);
        assert_eq!(first["t"], 0.0);
    }

    #[test]
    fn preview_matches_exact_execution() {
        let start = CarriagePose::new(-10.0, 5.0, 3.0, -2.0);
        let goal = CarriagePose::new(12.0, -7.0, 1.0, 8.0);
        let preview = preview_plan(&start, &goal, 100);
        let mut robot = robot_at(start, AxesConfig::ideal());
        let res = execute_plan(&goal, &mut robot, ExecOptions { guard: Guard::Off, ..Default::default() }, None).unwrap();
        let executed: Vec<_> = res.steps.iter().map(|s| (s.axis, s.delta)).collect();
        assert_eq!(preview.len(), executed.len());
        for (a, b) in preview.iter().zip(&executed) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-9);
        }
    }
}
