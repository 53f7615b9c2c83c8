//! Python module `mrguide`: kinematics, registration, workspace, the axis
//! simulator with the sequential planner, and targeting experiments.
//!
//! Lengths are millimetres and angles degrees. Functions taking `config`
//! accept a robot JSON document; the built-in robot is used when it is `None`.

use std::fs::File;

use mrguide_core::eval::{run_experiment as core_run_experiment, ExperimentSpec};
use mrguide_core::planner::{execute_plan, preview_plan as core_preview_plan, ExecOptions};
use mrguide_core::workspace::{self, TriMesh, DEFAULT_STANDOFF_MM, DEFAULT_VOXEL_PITCH};
use mrguide_core::{
    fit_rigid_transform as core_fit, forward_kinematics as core_fk, incline_angle as core_incline, AxisId,
    CarriagePose, FiducialPair, FiducialSet, Guard, Robot, RobotConfig, TargetPlan,
};
use nalgebra::Point3;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mrguide, MrguideError, PyException, "Toolkit error; `kind` holds the error name.");

fn py_err(e: impl Into<mrguide_core::Error>) -> PyErr {
    let e: mrguide_core::Error = e.into();
    let err = MrguideError::new_err(format!("{}: {e}", e.kind()));
    Python::attach(|py| {
        let _ = err.value(py).setattr("kind", e.kind());
    });
    err
}

fn robot_config(config: Option<&str>) -> PyResult<RobotConfig> {
    match config {
        Some(text) => RobotConfig::from_json(text).map_err(py_err),
        None => Ok(RobotConfig::default()),
    }
}

fn to_python<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(py_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Positions of the two carriages, `(x_u, y_u)` upper and `(x_l, y_l)` lower.
#[pyclass(name = "CarriagePose", from_py_object, eq)]
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    #[pyo3(get, set)]
    x_u: f64,
    #[pyo3(get, set)]
    y_u: f64,
    #[pyo3(get, set)]
    x_l: f64,
    #[pyo3(get, set)]
    y_l: f64,
}

impl From<CarriagePose> for Pose {
    fn from(p: CarriagePose) -> Self {
        Self {
            x_u: p.x_u,
            y_u: p.y_u,
            x_l: p.x_l,
            y_l: p.y_l,
        }
    }
}

impl From<Pose> for CarriagePose {
    fn from(p: Pose) -> Self {
        CarriagePose::new(p.x_u, p.y_u, p.x_l, p.y_l)
    }
}

#[pymethods]
impl Pose {
    #[new]
    #[pyo3(signature = (x_u = 0.0, y_u = 0.0, x_l = 0.0, y_l = 0.0))]
    fn new(x_u: f64, y_u: f64, x_l: f64, y_l: f64) -> Self {
        Self { x_u, y_u, x_l, y_l }
    }

    fn to_list(&self) -> [f64; 4] {
        [self.x_u, self.y_u, self.x_l, self.y_l]
    }

    /// Incline of the needle guide, degrees.
    #[pyo3(signature = (config = None))]
    fn incline(&self, config: Option<&str>) -> PyResult<f64> {
        Ok(core_incline(&(*self).into(), &robot_config(config)?.robot))
    }

    fn __repr__(&self) -> String {
        format!(
            "CarriagePose(x_u={}, y_u={}, x_l={}, y_l={})",
            self.x_u, self.y_u, self.x_l, self.y_l
        )
    }
}

/// Carriage pose for the line through `entry` and `target` (robot frame).
/// Returns a dict with `pose`, `incline_deg`, `within_travel`, `within_incline`.
#[pyfunction]
#[pyo3(signature = (entry, target, config = None))]
fn solve_ik<'py>(py: Python<'py>, entry: [f64; 3], target: [f64; 3], config: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = robot_config(config)?;
    let plan = TargetPlan::robot(Point3::from(entry), Point3::from(target));
    let sol = mrguide_core::solve_inverse_kinematics(&plan, &cfg.robot).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("pose", Pose::from(sol.pose))?;
    d.set_item("incline_deg", sol.incline_deg)?;
    d.set_item("within_travel", sol.within_travel)?;
    d.set_item("within_incline", sol.within_incline)?;
    Ok(d)
}

/// Needle line of `pose`: `(origin, unit direction)`, origin at the upper bearing.
#[pyfunction]
#[pyo3(signature = (pose, config = None))]
fn forward_kinematics(pose: Pose, config: Option<&str>) -> PyResult<([f64; 3], [f64; 3])> {
    let cfg = robot_config(config)?;
    let line = core_fk(&pose.into(), &cfg.robot);
    let (o, d) = (line.origin, line.direction);
    Ok(([o.x, o.y, o.z], [d.x, d.y, d.z]))
}

/// Tip position on the plane `depth` mm below the lower bearing.
#[pyfunction]
#[pyo3(signature = (pose, depth, config = None))]
fn tip_on_plane(pose: Pose, depth: f64, config: Option<&str>) -> PyResult<[f64; 3]> {
    let cfg = robot_config(config)?;
    let p = mrguide_core::kinematics::tip_on_plane(&pose.into(), &cfg.robot, depth);
    Ok([p.x, p.y, p.z])
}

/// Tip and angular error `(mm, deg)` when both carriages are off by `deviation`
/// in x and y, in opposite directions, on the plane `depth` below the lower bearing.
#[pyfunction]
#[pyo3(signature = (deviation, depth, config = None))]
fn worst_case_errors(deviation: f64, depth: f64, config: Option<&str>) -> PyResult<(f64, f64)> {
    Ok(mrguide_core::kinematics::worst_case_errors(&robot_config(config)?.robot, deviation, depth))
}

/// Rigid MR-to-robot registration.
#[pyclass(name = "Registration", skip_from_py_object)]
#[derive(Debug, Clone)]
struct PyRegistration {
    inner: mrguide_core::Registration,
}

#[pymethods]
impl PyRegistration {
    #[getter]
    fn rotation(&self) -> [[f64; 3]; 3] {
        let m = self.inner.transform.rotation();
        std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        let t = self.inner.transform.translation();
        [t.x, t.y, t.z]
    }

    #[getter]
    fn quaternion_wxyz(&self) -> [f64; 4] {
        self.inner.transform.quaternion_wxyz()
    }

    #[getter]
    fn rms_residual(&self) -> f64 {
        self.inner.rms_residual
    }

    /// Maps an MR-frame point into the robot frame.
    fn apply(&self, point: [f64; 3]) -> [f64; 3] {
        let p = self.inner.transform.apply_point(&Point3::from(point));
        [p.x, p.y, p.z]
    }
}

/// Least-squares rigid transform taking `mr` points onto `robot` points.
#[pyfunction]
fn fit_rigid_transform(mr: Vec<[f64; 3]>, robot: Vec<[f64; 3]>) -> PyResult<PyRegistration> {
    if mr.len() != robot.len() {
        return Err(MrguideError::new_err("InvalidArguments: point lists differ in length"));
    }
    let pairs = mr
        .iter()
        .zip(&robot)
        .map(|(a, b)| FiducialPair::new(Point3::from(*a), Point3::from(*b)))
        .collect();
    let set = FiducialSet::new(pairs).map_err(py_err)?;
    Ok(PyRegistration {
        inner: core_fit(&set).map_err(py_err)?,
    })
}

/// Whether a needle can reach `(x, y)` on the plane `depth` below the lower bearing.
#[pyfunction]
#[pyo3(signature = (x, y, depth, config = None))]
fn frustum_contains(x: f64, y: f64, depth: f64, config: Option<&str>) -> PyResult<bool> {
    Ok(workspace::frustum_contains(&robot_config(config)?.robot, x, y, depth))
}

/// Reachable points `[x, y, z]` sampled on depth planes from `depth_min` to `depth_max`.
#[pyfunction]
#[pyo3(signature = (depth_min, depth_max, resolution, config = None))]
fn sample_workspace(depth_min: f64, depth_max: f64, resolution: f64, config: Option<&str>) -> PyResult<Vec<[f64; 3]>> {
    let cfg = robot_config(config)?;
    let cloud = workspace::sample_workspace(&cfg.robot, [depth_min, depth_max], resolution).map_err(py_err)?;
    Ok(cloud.samples.iter().map(|s| s.point).collect())
}

/// Reachable fraction of an organ mesh (STL path, or the stand-in ellipsoid).
#[pyfunction]
#[pyo3(signature = (stl_path = None, standoff = DEFAULT_STANDOFF_MM, pitch = DEFAULT_VOXEL_PITCH, resolution = 5.0, config = None))]
fn coverage_ratio<'py>(
    py: Python<'py>,
    stl_path: Option<&str>,
    standoff: f64,
    pitch: f64,
    resolution: f64,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = robot_config(config)?;
    let cov = py
        .detach(|| -> mrguide_core::Result<_> {
            let organ = match stl_path {
                Some(p) => TriMesh::read_stl(File::open(p)?)?,
                None => workspace::standin_organ(&cfg.robot)?,
            };
            let deepest = (cfg.robot.z_lower - (organ.bounds().0.z - standoff)).max(0.0);
            let cloud = workspace::sample_workspace(&cfg.robot, [0.0, deepest + resolution], resolution)?;
            Ok(workspace::coverage_ratio(&cloud, &organ, standoff, pitch)?)
        })
        .map_err(py_err)?;
    to_python(py, &cov)
}

/// Moves the sequential strategy would command from `start` to `goal` on exact axes.
#[pyfunction]
#[pyo3(signature = (start, goal, max_iterations = 500))]
fn preview_plan(start: Pose, goal: Pose, max_iterations: usize) -> Vec<(u8, f64)> {
    core_preview_plan(&start.into(), &goal.into(), max_iterations)
        .into_iter()
        .map(|(a, d)| (a.number(), d))
        .collect()
}

/// Four pneumatic axes holding the needle guide, driven one at a time.
#[pyclass(name = "Simulator", skip_from_py_object)]
struct Simulator {
    robot: Robot,
}

#[pymethods]
impl Simulator {
    #[new]
    #[pyo3(signature = (config = None, pose = None))]
    fn new(config: Option<&str>, pose: Option<Pose>) -> PyResult<Self> {
        let cfg = robot_config(config)?;
        let start = pose.map(CarriagePose::from).unwrap_or_else(|| cfg.robot.home_pose());
        start.check_limits(&cfg.robot).map_err(py_err)?;
        Ok(Self {
            robot: cfg.robot_at(&start).map_err(py_err)?,
        })
    }

    /// True carriage positions.
    #[getter]
    fn pose(&self) -> Pose {
        self.robot.pose().into()
    }

    /// Positions as read by the encoders.
    #[getter]
    fn encoder_pose(&self) -> Pose {
        self.robot.encoder_pose().into()
    }

    #[getter]
    fn incline(&self) -> f64 {
        self.robot.incline()
    }

    /// Drives to `goal` with the sequential strategy and returns the run
    /// summary including the step log.
    #[pyo3(signature = (goal, guard = true, dt = 0.05))]
    fn move_to<'py>(&mut self, py: Python<'py>, goal: Pose, guard: bool, dt: f64) -> PyResult<Bound<'py, PyAny>> {
        let options = ExecOptions {
            guard: if guard { Guard::On } else { Guard::Off },
            dt,
            ..ExecOptions::default()
        };
        let robot = &mut self.robot;
        let result = py
            .detach(|| execute_plan(&goal.into(), robot, options, None))
            .map_err(py_err)?;
        to_python(py, &result)
    }

    /// Settles one axis (1 to 4) at `target` alone. Returns the time taken, s.
    #[pyo3(signature = (axis, target, dt = 0.01))]
    fn settle_axis(&mut self, axis: u8, target: f64, dt: f64) -> PyResult<f64> {
        let id = AxisId::from_number(axis)
            .ok_or_else(|| MrguideError::new_err(format!("InvalidArguments: no axis {axis}")))?;
        self.robot
            .axis_mut(id)
            .settle(target, dt, mrguide_core::axis::DEFAULT_SETTLE_TIMEOUT_S)
            .map_err(py_err)
    }
}

/// Runs a targeting experiment. `spec` is `"default"` (calibrated noise),
/// `"ideal"` (no noise) or an experiment JSON document. Returns
/// `{"summary": ..., "records": [...]}`; results do not depend on `jobs`.
#[pyfunction]
#[pyo3(signature = (spec = "default", seed = None, jobs = 0))]
fn run_experiment<'py>(py: Python<'py>, spec: &str, seed: Option<u64>, jobs: usize) -> PyResult<Bound<'py, PyAny>> {
    let mut exp = match spec {
        "default" => ExperimentSpec::calibrated(0),
        "ideal" => ExperimentSpec::default(),
        text => ExperimentSpec::from_json(text).map_err(py_err)?,
    };
    if let Some(s) = seed {
        exp.model.seed = s;
    }
    let report = py.detach(|| core_run_experiment(&exp, jobs)).map_err(py_err)?;
    to_python(py, &report)
}

#[pymodule]
fn mrguide(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MrguideError", m.py().get_type::<MrguideError>())?;
    m.add_class::<Pose>()?;
    m.add_class::<PyRegistration>()?;
    m.add_class::<Simulator>()?;
    m.add_function(wrap_pyfunction!(solve_ik, m)?)?;
    m.add_function(wrap_pyfunction!(forward_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(tip_on_plane, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_errors, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rigid_transform, m)?)?;
    m.add_function(wrap_pyfunction!(frustum_contains, m)?)?;
    m.add_function(wrap_pyfunction!(sample_workspace, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(preview_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
