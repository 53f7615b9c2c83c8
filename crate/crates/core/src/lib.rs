//! Simulation, planning and evaluation toolkit for a 4-DoF stacked-Cartesian
//! needle-guidance robot.
//!
//! The robot holds a needle guide between two spherical bearings, one on each of
//! two stacked XY carriages. [`kinematics`] maps an entry/target pair to carriage
//! positions, [`workspace`] describes the reachable frustum and its overlap with
//! an organ mesh, [`axis`] simulates the pneumatic bang-bang axes, [`planner`]
//! sequences single-axis moves, and [`eval`] reproduces targeting experiments.

pub mod axis;
pub mod config;
pub mod eval;
pub mod geometry;
pub mod kinematics;
pub mod planner;
pub mod workspace;

use thiserror::Error;

pub use axis::{AxesConfig, Axis, AxisConfig, AxisError, AxisParams, AxisState, Valve};
pub use config::RobotConfig;
pub use geometry::{
    fit_rigid_transform, FiducialPair, FiducialSet, Frame, FramedPoint, GeometryError, NeedleLine,
    Registration, RigidTransform,
};
pub use kinematics::{
    forward_kinematics, incline_angle, project_to_plane, solve_inverse_kinematics, AxisId, CarriagePose,
    IkSolution, KinematicsError, RobotParams, TargetPlan,
};
pub use planner::{execute_plan, plan_step, Guard, MoveResult, PlanError, PlanState, PlanStep, Robot};

/// Crate-wide error, wrapping every module error plus I/O and parsing failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Axis(#[from] AxisError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Workspace(#[from] workspace::WorkspaceError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable error name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(e) => e.kind(),
            Error::Kinematics(e) => e.kind(),
            Error::Axis(e) => e.kind(),
            Error::Plan(e) => e.kind(),
            Error::Workspace(e) => e.kind(),
            Error::Eval(e) => e.kind(),
            Error::Json(_) => "InvalidJson",
            Error::Csv(_) => "Csv",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
