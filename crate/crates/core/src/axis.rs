//! Time-stepped model of one pneumatic lead-screw axis under bang-bang control.
//!
//! While the valve is open the carriage moves at a fixed, direction-dependent
//! speed. The valve closes the moment the position error enters the stop
//! threshold; the carriage then keeps moving for `delay_s + coast_time_s`
//! (residual line pressure and inertia) before it stops. The encoder quantizes
//! feedback only, never the ground-truth position.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{AxisId, RobotParams};

/// Largest integration step accepted by [`Axis::tick`].
pub const MAX_DT: f64 = 0.1;

/// Default cap on simulated time for a single settle.
pub const DEFAULT_SETTLE_TIMEOUT_S: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AxisError {
    #[error("setpoint {target:.4} mm outside travel [{min}, {max}]")]
    TargetOutOfTravel { target: f64, min: f64, max: f64 },
    #[error("time step {0} s outside (0, {MAX_DT}]")]
    InvalidStep(f64),
    #[error("axis did not settle within {limit_s} s")]
    Timeout { limit_s: f64 },
    #[error("invalid axis parameters: {0}")]
    InvalidParams(String),
}

impl AxisError {
    pub fn kind(&self) -> &'static str {
        match self {
            AxisError::TargetOutOfTravel { .. } => "TargetOutOfTravel",
            AxisError::InvalidStep(_) => "InvalidStep",
            AxisError::Timeout { .. } => "Timeout",
            AxisError::InvalidParams(_) => "InvalidParams",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valve {
    Off,
    Forward,
    Reverse,
}

impl Valve {
    fn sign(self) -> f64 {
        match self {
            Valve::Off => 0.0,
            Valve::Forward => 1.0,
            Valve::Reverse => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Valve::Off => "off",
            Valve::Forward => "forward",
            Valve::Reverse => "reverse",
        }
    }
}

/// Per-axis drive and controller settings as they appear in the robot config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisConfig {
    #[serde(rename = "speed_pos_mm_s")]
    pub speed_pos: f64,
    #[serde(rename = "speed_neg_mm_s")]
    pub speed_neg: f64,
    #[serde(rename = "stop_threshold_mm")]
    pub stop_threshold: f64,
    /// Time the carriage keeps moving after the valve closes.
    #[serde(rename = "coast_time_s", default = "default_coast_time")]
    pub coast_time: f64,
    /// `None` disables quantization.
    #[serde(default = "default_cpm")]
    pub encoder_counts_per_mm: Option<f64>,
    /// Pure transport delay of the pneumatic line.
    #[serde(rename = "delay_s", default)]
    pub delay: f64,
}

fn default_coast_time() -> f64 {
    0.3
}

fn default_cpm() -> Option<f64> {
    Some(100.0)
}

impl AxisConfig {
    /// Symmetric 0.5 mm/s drive with a 0.3 mm threshold.
    pub fn default_x() -> Self {
        Self {
            speed_pos: 0.5,
            speed_neg: 0.5,
            stop_threshold: 0.3,
            coast_time: default_coast_time(),
            encoder_counts_per_mm: default_cpm(),
            delay: 0.0,
        }
    }

    /// 30 mm in 60 s forward and in 35 s in reverse, 0.6 mm threshold.
    pub fn default_y() -> Self {
        Self {
            speed_pos: 30.0 / 60.0,
            speed_neg: 30.0 / 35.0,
            stop_threshold: 0.6,
            ..Self::default_x()
        }
    }

    /// Exact positioning: no deadband, no coast, no quantization.
    pub fn ideal() -> Self {
        Self {
            speed_pos: 5.0,
            speed_neg: 5.0,
            stop_threshold: 0.0,
            coast_time: 0.0,
            encoder_counts_per_mm: None,
            delay: 0.0,
        }
    }

    pub fn with_travel(self, min: f64, max: f64) -> AxisParams {
        AxisParams { config: self, travel: (min, max) }
    }
}

/// Per-axis configuration for all four axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxesConfig {
    pub upper_x: AxisConfig,
    pub upper_y: AxisConfig,
    pub lower_x: AxisConfig,
    pub lower_y: AxisConfig,
}

impl Default for AxesConfig {
    fn default() -> Self {
        Self {
            upper_x: AxisConfig::default_x(),
            upper_y: AxisConfig::default_y(),
            lower_x: AxisConfig::default_x(),
            lower_y: AxisConfig::default_y(),
        }
    }
}

impl AxesConfig {
    pub fn ideal() -> Self {
        Self {
            upper_x: AxisConfig::ideal(),
            upper_y: AxisConfig::ideal(),
            lower_x: AxisConfig::ideal(),
            lower_y: AxisConfig::ideal(),
        }
    }

    pub fn get(&self, axis: AxisId) -> &AxisConfig {
        match axis {
            AxisId::UpperX => &self.upper_x,
            AxisId::UpperY => &self.upper_y,
            AxisId::LowerX => &self.lower_x,
            AxisId::LowerY => &self.lower_y,
        }
    }

    pub fn get_mut(&mut self, axis: AxisId) -> &mut AxisConfig {
        match axis {
            AxisId::UpperX => &mut self.upper_x,
            AxisId::UpperY => &mut self.upper_y,
            AxisId::LowerX => &mut self.lower_x,
            AxisId::LowerY => &mut self.lower_y,
        }
    }

    /// Builds the four axes with travel taken from the robot geometry.
    pub fn build(&self, robot: &RobotParams) -> Result<[AxisParams; 4], AxisError> {
        let mk = |axis: AxisId| {
            let (min, max) = robot.axis_range(axis);
            let p = self.get(axis).with_travel(min, max);
            p.validate().map(|_| p)
        };
        Ok([
            mk(AxisId::UpperX)?,
            mk(AxisId::UpperY)?,
            mk(AxisId::LowerX)?,
            mk(AxisId::LowerY)?,
        ])
    }
}

/// Drive settings plus travel bounds of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisParams {
    #[serde(flatten)]
    pub config: AxisConfig,
    pub travel: (f64, f64),
}

impl AxisParams {
    pub fn validate(&self) -> Result<(), AxisError> {
        let c = &self.config;
        let bad = |m: &str| Err(AxisError::InvalidParams(m.to_string()));
        for s in [c.speed_pos, c.speed_neg] {
            if !(s > 0.0 && s <= 5.0) {
                return bad("speeds must lie in (0, 5] mm/s");
            }
        }
        if !(c.stop_threshold >= 0.0) || !(c.coast_time >= 0.0) || !(c.delay >= 0.0) {
            return bad("threshold, coast time and delay must be non-negative");
        }
        if let Some(cpm) = c.encoder_counts_per_mm {
            if !(cpm > 0.0 && cpm.is_finite()) {
                return bad("encoder resolution must be positive");
            }
        }
        if !(self.travel.0 < self.travel.1) {
            return bad("travel must be a non-empty interval");
        }
        Ok(())
    }

    pub fn speed(&self, valve: Valve) -> f64 {
        match valve {
            Valve::Forward => self.config.speed_pos,
            Valve::Reverse => self.config.speed_neg,
            Valve::Off => 0.0,
        }
    }

    /// Distance travelled after the valve closes while moving in `valve`'s direction.
    pub fn coast_distance(&self, valve: Valve) -> f64 {
        self.speed(valve) * (self.config.coast_time + self.config.delay)
    }

    /// Largest coast distance over both directions.
    pub fn max_coast_distance(&self) -> f64 {
        self.coast_distance(Valve::Forward).max(self.coast_distance(Valve::Reverse))
    }

    pub fn half_count(&self) -> f64 {
        self.config.encoder_counts_per_mm.map_or(0.0, |cpm| 0.5 / cpm)
    }

    pub fn quantize(&self, position: f64) -> f64 {
        match self.config.encoder_counts_per_mm {
            Some(cpm) => (position * cpm).round() / cpm,
            None => position,
        }
    }

    /// Worst-case distance between a settled encoder reading and its setpoint.
    pub fn settle_bound(&self) -> f64 {
        self.config.stop_threshold + self.max_coast_distance()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase")]
enum Motion {
    Still,
    /// Valve open, waiting for line pressure.
    Starting { remaining: f64 },
    Driving,
    /// Valve closed, carriage still moving in `direction`.
    Coasting { direction: f64, speed: f64, remaining: f64 },
}

/// Observable and ground-truth state of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisState {
    pub position: f64,
    pub encoder_position: f64,
    pub setpoint: Option<f64>,
    pub valve: Valve,
    pub at_home_limit: bool,
    pub at_far_limit: bool,
    motion: Motion,
}

impl AxisState {
    /// Signed carriage speed right now.
    pub fn velocity(&self, params: &AxisParams) -> f64 {
        match self.motion {
            Motion::Driving => self.valve.sign() * params.speed(self.valve),
            Motion::Coasting { direction, speed, .. } => direction * speed,
            _ => 0.0,
        }
    }

    /// Valve closed and no residual motion left.
    pub fn is_stationary(&self) -> bool {
        self.valve == Valve::Off && matches!(self.motion, Motion::Still)
    }

    /// Setpoint minus encoder reading, zero without a setpoint.
    pub fn encoder_error(&self) -> f64 {
        self.setpoint.map_or(0.0, |s| s - self.encoder_position)
    }
}

/// One simulated axis: parameters plus evolving state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    params: AxisParams,
    state: AxisState,
}

/// Sample of an axis trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSample {
    pub t: f64,
    pub position: f64,
    pub encoder: f64,
    pub valve: Valve,
}

impl Axis {
    /// Axis at rest at `position`, clamped into travel.
    pub fn new(params: AxisParams, position: f64) -> Self {
        let position = position.clamp(params.travel.0, params.travel.1);
        let mut axis = Self {
            params,
            state: AxisState {
                position,
                encoder_position: 0.0,
                setpoint: None,
                valve: Valve::Off,
                at_home_limit: false,
                at_far_limit: false,
                motion: Motion::Still,
            },
        };
        axis.refresh_sensors();
        axis
    }

    pub fn params(&self) -> &AxisParams {
        &self.params
    }

    pub fn state(&self) -> &AxisState {
        &self.state
    }

    pub fn position(&self) -> f64 {
        self.state.position
    }

    pub fn encoder(&self) -> f64 {
        self.state.encoder_position
    }

    fn refresh_sensors(&mut self) {
        let (min, max) = self.params.travel;
        self.state.encoder_position = self.params.quantize(self.state.position);
        self.state.at_home_limit = self.state.position <= min;
        self.state.at_far_limit = self.state.position >= max;
    }

    /// Sets a new setpoint and opens or closes the valve from the encoder error.
    pub fn command_setpoint(&mut self, target: f64) -> Result<(), AxisError> {
        let (min, max) = self.params.travel;
        if !(target >= min - 1e-9 && target <= max + 1e-9) {
            return Err(AxisError::TargetOutOfTravel { target, min, max });
        }
        let target = target.clamp(min, max);
        let threshold = self.params.config.stop_threshold;
        let error = target - self.state.encoder_position;
        let valve = if error > threshold {
            Valve::Forward
        } else if error < -threshold {
            Valve::Reverse
        } else {
            Valve::Off
        };
        self.state.setpoint = Some(target);
        if valve != self.state.valve {
            self.state.valve = valve;
            if valve != Valve::Off {
                let delay = self.params.config.delay;
                self.state.motion = if delay > 0.0 {
                    Motion::Starting { remaining: delay }
                } else {
                    Motion::Driving
                };
            } else if matches!(self.state.motion, Motion::Starting { .. } | Motion::Driving) {
                self.state.motion = Motion::Still;
            }
        }
        Ok(())
    }

    /// Closes the valve immediately; residual motion still plays out.
    pub fn stop(&mut self) {
        if self.state.valve != Valve::Off {
            self.close_valve();
        }
    }

    fn close_valve(&mut self) {
        let valve = self.state.valve;
        let was_driving = matches!(self.state.motion, Motion::Driving);
        self.state.valve = Valve::Off;
        let remaining = self.params.config.coast_time + self.params.config.delay;
        self.state.motion = if was_driving && remaining > 0.0 {
            Motion::Coasting {
                direction: valve.sign(),
                speed: self.params.speed(valve),
                remaining,
            }
        } else {
            Motion::Still
        };
    }

    /// Position at which the valve closes for the current setpoint and direction.
    ///
    /// Half an encoder count is taken off the threshold so that the reading at
    /// valve closing is always inside the deadband.
    fn stop_point(&self) -> f64 {
        let setpoint = self.state.setpoint.unwrap_or(self.state.position);
        let margin = (self.params.config.stop_threshold - self.params.half_count() - 1e-12).max(0.0);
        setpoint - self.state.valve.sign() * margin
    }

    /// Moves by `delta`, clamping at the travel bounds. Returns true on a limit hit.
    fn displace(&mut self, delta: f64) -> bool {
        let (min, max) = self.params.travel;
        let next = self.state.position + delta;
        let clamped = next.clamp(min, max);
        self.state.position = clamped;
        clamped != next
    }

    fn hit_limit(&mut self) {
        self.state.valve = Valve::Off;
        self.state.motion = Motion::Still;
    }

    /// Advances the simulation by `dt` seconds.
    pub fn tick(&mut self, dt: f64) -> Result<(), AxisError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(AxisError::InvalidStep(dt));
        }
        let mut left = dt;
        while left > 0.0 {
            match self.state.motion {
                Motion::Still => break,
                Motion::Starting { remaining } => {
                    let used = remaining.min(left);
                    left -= used;
                    self.state.motion = if remaining - used > 0.0 {
                        Motion::Starting { remaining: remaining - used }
                    } else {
                        Motion::Driving
                    };
                }
                Motion::Driving => {
                    let dir = self.state.valve.sign();
                    let speed = self.params.speed(self.state.valve);
                    let to_stop = (self.stop_point() - self.state.position) * dir;
                    if to_stop <= 0.0 {
                        self.close_valve();
                        continue;
                    }
                    let reach = speed * left;
                    if reach >= to_stop {
                        left -= to_stop / speed;
                        self.state.position = self.stop_point();
                        let (min, max) = self.params.travel;
                        if self.state.position <= min || self.state.position >= max {
                            self.state.position = self.state.position.clamp(min, max);
                            self.hit_limit();
                        } else {
                            self.close_valve();
                        }
                    } else {
                        left = 0.0;
                        if self.displace(dir * reach) {
                            self.hit_limit();
                        }
                    }
                }
                Motion::Coasting { direction, speed, remaining } => {
                    let used = remaining.min(left);
                    left -= used;
                    let hit = self.displace(direction * speed * used);
                    self.state.motion = if hit || remaining - used <= 0.0 {
                        Motion::Still
                    } else {
                        Motion::Coasting {
                            direction,
                            speed,
                            remaining: remaining - used,
                        }
                    };
                }
            }
        }
        self.refresh_sensors();
        Ok(())
    }

    /// Commands `target` and ticks until the axis is stationary. Returns the
    /// simulated time spent.
    pub fn settle(&mut self, target: f64, dt: f64, timeout_s: f64) -> Result<f64, AxisError> {
        self.settle_with(target, dt, timeout_s, |_, _| {})
    }

    /// Like [`Axis::settle`], calling `observe(t, state)` after every tick.
    pub fn settle_with<F>(&mut self, target: f64, dt: f64, timeout_s: f64, mut observe: F) -> Result<f64, AxisError>
    where
        F: FnMut(f64, &AxisState),
    {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(AxisError::InvalidStep(dt));
        }
        self.command_setpoint(target)?;
        let mut ticks: u64 = 0;
        while !self.state.is_stationary() {
            let elapsed = ticks as f64 * dt;
            if elapsed >= timeout_s {
                self.stop();
                return Err(AxisError::Timeout { limit_s: timeout_s });
            }
            self.tick(dt)?;
            ticks += 1;
            observe(ticks as f64 * dt, &self.state);
        }
        Ok(ticks as f64 * dt)
    }

    /// Settles while recording a trace sample per tick, starting at t = 0.
    pub fn settle_traced(&mut self, target: f64, dt: f64, timeout_s: f64) -> Result<(f64, Vec<TraceSample>), AxisError> {
        let mut trace = vec![TraceSample {
            t: 0.0,
            position: self.state.position,
            encoder: self.state.encoder_position,
            valve: self.state.valve,
        }];
        let elapsed = self.settle_with(target, dt, timeout_s, |t, s| {
            trace.push(TraceSample {
                t,
                position: s.position,
                encoder: s.encoder_position,
                valve: s.valve,
            })
        })?;
        Ok((elapsed, trace))
    }
}

/// Writes a trace as CSV with columns `t,position,encoder,valve`.
pub fn write_trace_csv<W: std::io::Write>(samples: &[TraceSample], out: W) -> Result<(), crate::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "position", "encoder", "valve"])?;
    for s in samples {
        w.write_record([
            s.t.to_string(),
            s.position.to_string(),
            s.encoder.to_string(),
            s.valve.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
