//! Inverse and forward kinematics of the two stacked Cartesian stages.
//!
//! The needle guide is the line through the two spherical bearings, one on each
//! carriage. Bearing heights are fixed, so a pose is fully described by the four
//! planar carriage coordinates and the map from an entry/target pair to a pose is
//! a pair of line/plane intersections.

use nalgebra::{Point3, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{line_plane_intersection, FramedPoint, Frame, GeometryError, NeedleLine};

/// Slack allowed beyond travel and incline limits before IK refuses a solution.
pub const LIMIT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("{axis} = {value:.4} mm is outside travel [{min}, {max}]")]
    OutOfTravel {
        axis: AxisId,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("incline {incline_deg:.4} deg exceeds limit {limit_deg} deg")]
    InclineExceeded { incline_deg: f64, limit_deg: f64 },
    #[error("degenerate plan: {0}")]
    DegeneratePlan(&'static str),
    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl KinematicsError {
    pub fn kind(&self) -> &'static str {
        match self {
            KinematicsError::OutOfTravel { .. } => "OutOfTravel",
            KinematicsError::InclineExceeded { .. } => "InclineExceeded",
            KinematicsError::DegeneratePlan(_) => "DegeneratePlan",
            KinematicsError::InvalidParams(_) => "InvalidParams",
            KinematicsError::Geometry(e) => e.kind(),
        }
    }
}

/// The four actuated axes, numbered as in the sequential moving strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisId {
    UpperX = 1,
    UpperY = 2,
    LowerX = 3,
    LowerY = 4,
}

impl AxisId {
    pub const ALL: [AxisId; 4] = [AxisId::UpperX, AxisId::UpperY, AxisId::LowerX, AxisId::LowerY];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(AxisId::UpperX),
            2 => Some(AxisId::UpperY),
            3 => Some(AxisId::LowerX),
            4 => Some(AxisId::LowerY),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn is_x(self) -> bool {
        matches!(self, AxisId::UpperX | AxisId::LowerX)
    }

    /// Axis of the other carriage along the same coordinate.
    pub fn partner(self) -> Self {
        match self {
            AxisId::UpperX => AxisId::LowerX,
            AxisId::LowerX => AxisId::UpperX,
            AxisId::UpperY => AxisId::LowerY,
            AxisId::LowerY => AxisId::UpperY,
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, AxisId::UpperX | AxisId::UpperY)
    }

    pub fn name(self) -> &'static str {
        match self {
            AxisId::UpperX => "upper_x",
            AxisId::UpperY => "upper_y",
            AxisId::LowerX => "lower_x",
            AxisId::LowerY => "lower_y",
        }
    }
}

impl std::fmt::Display for AxisId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned carriage travel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl TravelRect {
    pub fn contains(&self, x: f64, y: f64, slack: f64) -> bool {
        x >= self.x_min - slack && x <= self.x_max + slack && y >= self.y_min - slack && y <= self.y_max + slack
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}

/// Fixed geometry and joint limits of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    /// z of the upper bearing plane.
    #[serde(rename = "z_u_mm")]
    pub z_upper: f64,
    /// z of the lower bearing plane.
    #[serde(rename = "z_l_mm")]
    pub z_lower: f64,
    #[serde(rename = "travel_x_mm")]
    pub travel_x: f64,
    #[serde(rename = "travel_y_mm")]
    pub travel_y: f64,
    #[serde(rename = "max_incline_deg")]
    pub max_incline_deg: f64,
    /// Lower-left corner of the travel rectangle; `None` centers it on the z axis.
    #[serde(rename = "travel_origin_mm", default, skip_serializing_if = "Option::is_none")]
    pub travel_origin: Option<[f64; 2]>,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            z_upper: -36.5,
            z_lower: -82.2,
            travel_x: 55.0,
            travel_y: 30.0,
            max_incline_deg: 30.0,
            travel_origin: None,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let fields = [self.z_upper, self.z_lower, self.travel_x, self.travel_y, self.max_incline_deg];
        if !fields.iter().all(|v| v.is_finite()) {
            return Err(KinematicsError::InvalidParams("non-finite value".into()));
        }
        if self.z_upper <= self.z_lower {
            return Err(KinematicsError::InvalidParams(
                "upper bearing must lie above the lower bearing".into(),
            ));
        }
        if self.travel_x <= 0.0 || self.travel_y <= 0.0 {
            return Err(KinematicsError::InvalidParams("travel must be positive".into()));
        }
        if !(self.max_incline_deg > 0.0 && self.max_incline_deg < 90.0) {
            return Err(KinematicsError::InvalidParams(
                "max incline must lie in (0, 90) degrees".into(),
            ));
        }
        Ok(())
    }

    /// Vertical distance between the bearing planes (45.7 mm for the default robot).
    pub fn bearing_separation(&self) -> f64 {
        self.z_upper - self.z_lower
    }

    /// Largest planar offset between the two carriages allowed by the incline limit.
    pub fn max_relative_displacement(&self) -> f64 {
        self.bearing_separation() * self.max_incline_deg.to_radians().tan()
    }

    pub fn travel(&self) -> TravelRect {
        let [x0, y0] = self
            .travel_origin
            .unwrap_or([-self.travel_x / 2.0, -self.travel_y / 2.0]);
        TravelRect {
            x_min: x0,
            x_max: x0 + self.travel_x,
            y_min: y0,
            y_max: y0 + self.travel_y,
        }
    }

    /// Travel interval of one axis.
    pub fn axis_range(&self, axis: AxisId) -> (f64, f64) {
        let r = self.travel();
        if axis.is_x() {
            r.x_range()
        } else {
            r.y_range()
        }
    }

    /// Pose with both carriages at the center of travel.
    pub fn home_pose(&self) -> CarriagePose {
        let (cx, cy) = self.travel().center();
        CarriagePose::new(cx, cy, cx, cy)
    }
}

/// Planar positions of the upper and lower carriages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarriagePose {
    pub x_u: f64,
    pub y_u: f64,
    pub x_l: f64,
    pub y_l: f64,
}

impl CarriagePose {
    pub fn new(x_u: f64, y_u: f64, x_l: f64, y_l: f64) -> Self {
        Self { x_u, y_u, x_l, y_l }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Coordinates in axis order 1..4: (x_u, y_u, x_l, y_l).
    pub fn to_array(&self) -> [f64; 4] {
        [self.x_u, self.y_u, self.x_l, self.y_l]
    }

    pub fn get(&self, axis: AxisId) -> f64 {
        self.to_array()[axis.index()]
    }

    pub fn set(&mut self, axis: AxisId, value: f64) {
        match axis {
            AxisId::UpperX => self.x_u = value,
            AxisId::UpperY => self.y_u = value,
            AxisId::LowerX => self.x_l = value,
            AxisId::LowerY => self.y_l = value,
        }
    }

    /// Upper minus lower carriage offset.
    pub fn relative_displacement(&self) -> Vector2<f64> {
        Vector2::new(self.x_u - self.x_l, self.y_u - self.y_l)
    }

    pub fn upper_point(&self, params: &RobotParams) -> Point3<f64> {
        Point3::new(self.x_u, self.y_u, params.z_upper)
    }

    pub fn lower_point(&self, params: &RobotParams) -> Point3<f64> {
        Point3::new(self.x_l, self.y_l, params.z_lower)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// First axis (in axis order) outside travel by more than `slack`.
    pub fn travel_violation(&self, params: &RobotParams, slack: f64) -> Option<KinematicsError> {
        AxisId::ALL.iter().find_map(|&axis| {
            let (min, max) = params.axis_range(axis);
            let value = self.get(axis);
            (value < min - slack || value > max + slack).then_some(KinematicsError::OutOfTravel {
                axis,
                value,
                min,
                max,
            })
        })
    }

    pub fn within_travel(&self, params: &RobotParams, slack: f64) -> bool {
        self.travel_violation(params, slack).is_none()
    }

    pub fn within_incline(&self, params: &RobotParams, slack_deg: f64) -> bool {
        incline_angle(self, params) <= params.max_incline_deg + slack_deg
    }

    /// Checks travel, then incline, with `LIMIT_SLACK`.
    pub fn check_limits(&self, params: &RobotParams) -> Result<(), KinematicsError> {
        if let Some(e) = self.travel_violation(params, LIMIT_SLACK) {
            return Err(e);
        }
        let incline_deg = incline_angle(self, params);
        if incline_deg > params.max_incline_deg + LIMIT_SLACK {
            return Err(KinematicsError::InclineExceeded {
                incline_deg,
                limit_deg: params.max_incline_deg,
            });
        }
        Ok(())
    }
}

/// Planned insertion: skin entry point above an in-tissue target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetPlan {
    pub entry: Point3<f64>,
    pub target: Point3<f64>,
    pub frame: Frame,
}

impl TargetPlan {
    pub fn robot(entry: Point3<f64>, target: Point3<f64>) -> Self {
        Self {
            entry,
            target,
            frame: Frame::Robot,
        }
    }

    pub fn from_points(entry: FramedPoint, target: FramedPoint) -> Result<Self, GeometryError> {
        target.expect_frame(entry.frame)?;
        Ok(Self {
            entry: entry.position,
            target: target.position,
            frame: entry.frame,
        })
    }
}

/// IK output with limit flags. Marginal violations (within `LIMIT_SLACK`) are
/// reported here instead of failing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IkSolution {
    pub pose: CarriagePose,
    pub incline_deg: f64,
    pub within_travel: bool,
    pub within_incline: bool,
}

/// Carriage positions of the line through `entry` and `target`, without limit checks.
pub fn carriage_positions(plan: &TargetPlan, params: &RobotParams) -> Result<CarriagePose, KinematicsError> {
    let (e, t) = (plan.entry, plan.target);
    if !(e.iter().chain(t.iter()).all(|c| c.is_finite())) {
        return Err(GeometryError::NonFinite.into());
    }
    let dz = e.z - t.z;
    if dz.abs() < 1e-12 {
        return Err(KinematicsError::DegeneratePlan("entry and target at equal depth"));
    }
    if dz < 0.0 {
        return Err(KinematicsError::DegeneratePlan("entry lies below target"));
    }
    let su = (params.z_upper - t.z) / dz;
    let sl = (params.z_lower - t.z) / dz;
    Ok(CarriagePose {
        x_u: su * (e.x - t.x) + t.x,
        y_u: su * (e.y - t.y) + t.y,
        x_l: sl * (e.x - t.x) + t.x,
        y_l: sl * (e.y - t.y) + t.y,
    })
}

/// Carriage positions placing the needle guide on the entry/target line.
pub fn solve_inverse_kinematics(plan: &TargetPlan, params: &RobotParams) -> Result<IkSolution, KinematicsError> {
    if plan.frame != Frame::Robot {
        return Err(GeometryError::FrameMismatch {
            expected: Frame::Robot,
            actual: plan.frame,
        }
        .into());
    }
    let pose = carriage_positions(plan, params)?;
    pose.check_limits(params)?;
    let incline_deg = incline_angle(&pose, params);
    Ok(IkSolution {
        pose,
        incline_deg,
        within_travel: pose.within_travel(params, 0.0),
        within_incline: incline_deg <= params.max_incline_deg,
    })
}

/// Needle line through both bearings, anchored at the upper bearing and pointing down.
pub fn forward_kinematics(pose: &CarriagePose, params: &RobotParams) -> NeedleLine {
    NeedleLine::through(pose.upper_point(params), pose.lower_point(params), Frame::Robot)
        .expect("bearing planes are distinct")
}

/// Angle between the needle guide and the vertical, degrees.
pub fn incline_angle(pose: &CarriagePose, params: &RobotParams) -> f64 {
    pose.relative_displacement()
        .norm()
        .atan2(params.bearing_separation())
        .to_degrees()
}

/// Intersection of the needle line with the plane z = `plane_z`, in the robot frame.
pub fn project_to_plane(line: &NeedleLine, plane_z: f64) -> Result<FramedPoint, KinematicsError> {
    if line.frame != Frame::Robot {
        return Err(GeometryError::FrameMismatch {
            expected: Frame::Robot,
            actual: line.frame,
        }
        .into());
    }
    Ok(line_plane_intersection(line, plane_z)?)
}

/// Target point of `pose` on the plane `depth` below the lower bearing.
pub fn tip_on_plane(pose: &CarriagePose, params: &RobotParams, depth: f64) -> Point3<f64> {
    // along the guide, z is an affine function of the carriage offset, so the
    // planar tip position is a fixed blend of the two carriages
    let s = depth / params.bearing_separation();
    Point3::new(
        pose.x_l + s * (pose.x_l - pose.x_u),
        pose.y_l + s * (pose.y_l - pose.y_u),
        params.z_lower - depth,
    )
}

/// Worst-case tip and angular error when each carriage is off by `deviation` mm
/// in both x and y, the two carriages in opposite diagonal directions, measured on
/// the plane `depth` below the lower bearing.
///
/// The relative offset is then `2·deviation·√2` along the diagonal; the tip error
/// is `deviation·√2·(1 + 2·depth/separation)`. Returns `(tip_mm, angle_deg)`.
pub fn worst_case_errors(params: &RobotParams, deviation: f64, depth: f64) -> (f64, f64) {
    let sep = params.bearing_separation();
    let lever = 1.0 + 2.0 * depth / sep;
    let tip = deviation * std::f64::consts::SQRT_2 * lever;
    let angle = (2.0 * deviation * std::f64::consts::SQRT_2).atan2(sep).to_degrees();
    (tip, angle)
}

/// Tip-error bound for independent per-axis deviations `dev_x` and `dev_y`.
pub fn tip_error_bound(params: &RobotParams, dev_x: f64, dev_y: f64, depth: f64) -> f64 {
    let lever = 1.0 + 2.0 * depth / params.bearing_separation();
    (dev_x * lever).hypot(dev_y * lever)
}
