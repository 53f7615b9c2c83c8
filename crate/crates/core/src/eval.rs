//! Targeting experiments on the simulated robot: target grids, error injection,
//! position/orientation error metrics and incline-binned statistics.

use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::AxesConfig;
use crate::geometry::{angle_between, line_plane_intersection, Frame, NeedleLine, RigidTransform};
use crate::kinematics::{forward_kinematics, incline_angle, tip_on_plane, CarriagePose, RobotParams};
use crate::planner::{ExecOptions, PlanExecutor, Robot, StepOutcome};
use crate::RobotConfig;

/// Number of incline groups in a report.
pub const INCLINE_BINS: usize = 7;

/// Default target-plane depth below the lower bearing, mm.
pub const DEFAULT_DEPTH_MM: f64 = 80.0;

const PLANE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("infeasible target grid: {0}")]
    InfeasibleSpec(String),
    #[error("points lie on different planes (z {0} vs {1})")]
    PlaneMismatch(f64, f64),
    #[error("invalid error model: {0}")]
    InvalidModel(String),
}

impl EvalError {
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::InfeasibleSpec(_) => "InfeasibleSpec",
            EvalError::PlaneMismatch(..) => "PlaneMismatch",
            EvalError::InvalidModel(_) => "InvalidModel",
        }
    }
}

/// Euclidean distance between a target and the achieved crossing on the same plane.
pub fn position_error(target: &Point3<f64>, achieved: &Point3<f64>) -> Result<f64, EvalError> {
    if (target.z - achieved.z).abs() > PLANE_TOL {
        return Err(EvalError::PlaneMismatch(target.z, achieved.z));
    }
    Ok((target - achieved).norm())
}

/// Angle between desired and measured insertion directions, degrees.
pub fn orientation_error(desired: &NeedleLine, measured: &NeedleLine) -> f64 {
    angle_between(&desired.direction, &measured.direction).to_degrees()
}

/// Layout of upper points and the lower grid under each of them.
///
/// Upper points sit at the cell centers of a `upper_cols × upper_rows` lattice
/// over the travel rectangle. Each gets a `lower_cols × lower_rows` grid centered
/// under it. With `lower_pitch_mm` unset the pitch is graded across upper points
/// so that the corner poses of point `k` reach `√(k/(n−1))` of the incline limit
/// (times `pitch_fraction`); lower positions are then clipped to travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetGridSpec {
    pub upper_cols: usize,
    pub upper_rows: usize,
    pub lower_cols: usize,
    pub lower_rows: usize,
    /// Fixed lower-grid pitch `[x, y]`; poses beyond the limits are then an error.
    pub lower_pitch_mm: Option<[f64; 2]>,
    pub pitch_fraction: f64,
}

impl Default for TargetGridSpec {
    fn default() -> Self {
        Self {
            upper_cols: 13,
            upper_rows: 2,
            lower_cols: 3,
            lower_rows: 3,
            lower_pitch_mm: None,
            pitch_fraction: 0.999,
        }
    }
}

impl TargetGridSpec {
    pub fn upper_count(&self) -> usize {
        self.upper_cols * self.upper_rows
    }

    pub fn lower_count(&self) -> usize {
        self.lower_cols * self.lower_rows
    }

    pub fn len(&self) -> usize {
        self.upper_count() * self.lower_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn centered_offsets(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| i as f64 - (n as f64 - 1.0) / 2.0)
}

/// Commanded poses, upper point major.
pub fn generate_target_grid(spec: &TargetGridSpec, params: &RobotParams) -> Result<Vec<CarriagePose>, EvalError> {
    params.validate().map_err(|e| EvalError::InfeasibleSpec(e.to_string()))?;
    if spec.is_empty() {
        return Err(EvalError::InfeasibleSpec("empty grid".into()));
    }
    if !(spec.pitch_fraction >= 0.0 && spec.pitch_fraction <= 1.0) {
        return Err(EvalError::InfeasibleSpec(format!("pitch fraction {}", spec.pitch_fraction)));
    }
    let travel = params.travel();
    let ((x0, x1), (y0, y1)) = (travel.x_range(), travel.y_range());
    let r = params.max_relative_displacement();
    let n_upper = spec.upper_count();
    // largest corner offset in pitch units
    let ox = (spec.lower_cols as f64 - 1.0) / 2.0;
    let oy = (spec.lower_rows as f64 - 1.0) / 2.0;
    let corner = ox.hypot(oy);

    let mut poses = Vec::with_capacity(spec.len());
    for k in 0..n_upper {
        let (col, row) = (k / spec.upper_rows, k % spec.upper_rows);
        let xu = x0 + (x1 - x0) * (col as f64 + 0.5) / spec.upper_cols as f64;
        let yu = y0 + (y1 - y0) * (row as f64 + 0.5) / spec.upper_rows as f64;
        let (px, py, clip) = match spec.lower_pitch_mm {
            Some([px, py]) => (px, py, false),
            None if corner > 0.0 => {
                let grade = if n_upper > 1 { (k as f64 / (n_upper - 1) as f64).sqrt() } else { 1.0 };
                let p = grade * spec.pitch_fraction * r / corner;
                (p, p, true)
            }
            None => (0.0, 0.0, true),
        };
        for dx in centered_offsets(spec.lower_cols) {
            for dy in centered_offsets(spec.lower_rows) {
                let (mut xl, mut yl) = (xu + dx * px, yu + dy * py);
                if clip {
                    xl = xl.clamp(x0, x1);
                    yl = yl.clamp(y0, y1);
                }
                let pose = CarriagePose::new(xu, yu, xl, yl);
                if let Err(e) = pose.check_limits(params) {
                    return Err(EvalError::InfeasibleSpec(format!("pose {:?}: {e}", pose.to_array())));
                }
                poses.push(pose);
            }
        }
    }
    Ok(poses)
}

/// Folded-normal axis error: magnitude `|N(mean, sigma)|` with a random sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisNoise {
    pub mean_mm: f64,
    pub sigma_mm: f64,
}

impl AxisNoise {
    pub const ZERO: AxisNoise = AxisNoise { mean_mm: 0.0, sigma_mm: 0.0 };

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let mag = if self.sigma_mm > 0.0 {
            Normal::new(self.mean_mm, self.sigma_mm).map(|n| n.sample(rng)).unwrap_or(self.mean_mm)
        } else {
            self.mean_mm
        };
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        sign * mag.abs()
    }
}

/// Per-direction carriage positioning noise, applied to both carriages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisNoiseModel {
    pub x: AxisNoise,
    pub y: AxisNoise,
}

impl AxisNoiseModel {
    pub const ZERO: AxisNoiseModel = AxisNoiseModel { x: AxisNoise::ZERO, y: AxisNoise::ZERO };

    /// Positioning statistics measured on the pneumatic stages.
    pub fn measured() -> Self {
        Self {
            x: AxisNoise { mean_mm: 0.19, sigma_mm: 0.13 },
            y: AxisNoise { mean_mm: 0.17, sigma_mm: 0.15 },
        }
    }
}

/// Residual error of the image-to-robot registration: one rigid perturbation per
/// experiment, a rotation of fixed magnitude about a random horizontal axis
/// through the target-plane center, then a translation of fixed length in a
/// random direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationPerturbation {
    pub rotation_deg: f64,
    pub translation_mm: f64,
}

impl RegistrationPerturbation {
    pub const NONE: RegistrationPerturbation = RegistrationPerturbation { rotation_deg: 0.0, translation_mm: 0.0 };
}

/// Sources of error injected into an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorModel {
    pub axis_noise: AxisNoiseModel,
    /// Tracker noise per coordinate, mm.
    pub tracker_sigma_mm: f64,
    pub registration: RegistrationPerturbation,
    /// Gravity deflection of the needle in the guide clearance: the needle tilts
    /// toward vertical about the lower bearing by this angle times sin(incline).
    pub guide_sag_deg: f64,
    pub seed: u64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self::zero()
    }
}

impl ErrorModel {
    pub fn zero() -> Self {
        Self {
            axis_noise: AxisNoiseModel::ZERO,
            tracker_sigma_mm: 0.0,
            registration: RegistrationPerturbation::NONE,
            guide_sag_deg: 0.0,
            seed: 0,
        }
    }

    /// Stage statistics, a 0.5 mm tracker, and registration and guide terms sized
    /// to the observed free-space targeting error.
    pub fn calibrated(seed: u64) -> Self {
        Self {
            axis_noise: AxisNoiseModel::measured(),
            tracker_sigma_mm: 0.5 / 3f64.sqrt(),
            registration: RegistrationPerturbation { rotation_deg: 3.3, translation_mm: 0.3 },
            guide_sag_deg: 3.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let vals = [
            self.axis_noise.x.mean_mm,
            self.axis_noise.x.sigma_mm,
            self.axis_noise.y.mean_mm,
            self.axis_noise.y.sigma_mm,
            self.tracker_sigma_mm,
            self.registration.rotation_deg,
            self.registration.translation_mm,
            self.guide_sag_deg,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EvalError::InvalidModel("parameters must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// A full experiment description, readable from JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub robot: RobotConfig,
    pub grid: TargetGridSpec,
    pub model: ErrorModel,
    pub depth_mm: f64,
    pub exec: ExecOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            robot: RobotConfig {
                axes: AxesConfig::ideal(),
                ..RobotConfig::default()
            },
            grid: TargetGridSpec::default(),
            model: ErrorModel::zero(),
            depth_mm: DEFAULT_DEPTH_MM,
            exec: ExecOptions::default(),
        }
    }
}

impl ExperimentSpec {
    /// The calibrated free-space experiment: ideal drives, measured stage noise.
    pub fn calibrated(seed: u64) -> Self {
        Self {
            model: ErrorModel::calibrated(seed),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One targeting trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub trial: usize,
    pub commanded: CarriagePose,
    pub achieved: CarriagePose,
    pub target: [f64; 3],
    pub intersection: [f64; 3],
    pub position_error_mm: f64,
    pub orientation_error_deg: f64,
    pub incline_deg: f64,
    /// Planner failure, if the move did not complete.
    pub planner_error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation (0 below two values).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclineBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub count: usize,
    pub position_mm: Stat,
    pub orientation_deg: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub trials: usize,
    pub failed_trials: usize,
    pub depth_mm: f64,
    pub seed: u64,
    pub position_mm: Stat,
    pub orientation_deg: Stat,
    pub bins: Vec<InclineBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub summary: EvalSummary,
}

/// Equal-width incline bins over the observed range; the top edge is inclusive.
pub fn bin_records(records: &[EvalRecord], bins: usize) -> Vec<InclineBin> {
    let bins = bins.max(1);
    let lo = records.iter().map(|r| r.incline_deg).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.incline_deg).fold(f64::NEG_INFINITY, f64::max);
    if records.is_empty() {
        return Vec::new();
    }
    let width = (hi - lo) / bins as f64;
    let mut members: Vec<Vec<&EvalRecord>> = vec![Vec::new(); bins];
    for r in records {
        let i = if width > 0.0 { (((r.incline_deg - lo) / width) as usize).min(bins - 1) } else { 0 };
        members[i].push(r);
    }
    members
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let pos: Vec<f64> = m.iter().map(|r| r.position_error_mm).collect();
            let ori: Vec<f64> = m.iter().map(|r| r.orientation_error_deg).collect();
            InclineBin {
                lo_deg: lo + width * i as f64,
                hi_deg: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
                count: m.len(),
                position_mm: Stat::of(&pos),
                orientation_deg: Stat::of(&ori),
            }
        })
        .collect()
}

/// Unit horizontal direction at `angle` radians.
fn horizontal(angle: f64) -> Vector3<f64> {
    Vector3::new(angle.cos(), angle.sin(), 0.0)
}

/// Registration error transform for one experiment.
fn registration_error(model: &ErrorModel, pivot: Point3<f64>) -> RigidTransform {
    let reg = &model.registration;
    if reg.rotation_deg == 0.0 && reg.translation_mm == 0.0 {
        return RigidTransform::identity(Frame::Robot, Frame::Robot);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let axis = horizontal(rng.random_range(0.0..std::f64::consts::TAU));
    let dir = {
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let rho = (1.0 - z * z).sqrt();
        Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
    };
    RigidTransform::about_pivot(
        axis,
        reg.rotation_deg.to_radians(),
        pivot,
        dir * reg.translation_mm,
        Frame::Robot,
        Frame::Robot,
    )
    .unwrap_or_else(|_| RigidTransform::identity(Frame::Robot, Frame::Robot))
}

/// Drives the simulated robot from home to `goal`, returning the settled pose and
/// any planner failure.
fn drive(config: &RobotConfig, exec: ExecOptions, goal: &CarriagePose) -> (CarriagePose, Option<String>) {
    let home = config.robot.home_pose();
    let mut robot = match config.robot_at(&home) {
        Ok(r) => r,
        Err(e) => return (home, Some(e.to_string())),
    };
    let mut executor = match PlanExecutor::new(*goal, exec, &robot) {
        Ok(x) => x,
        Err(e) => return (robot.pose(), Some(e.to_string())),
    };
    loop {
        match executor.step(&mut robot, |_: &Robot, _| {}) {
            Ok(StepOutcome::Done) => return (robot.pose(), None),
            Ok(StepOutcome::Stepped(_)) => {}
            Err(e) => return (robot.pose(), Some(format!("{}: {e}", e.kind()))),
        }
    }
}

/// Builds the trial record from the settled pose and a measured needle line.
pub fn score_trial(
    trial: usize,
    params: &RobotParams,
    commanded: &CarriagePose,
    achieved: &CarriagePose,
    measured: &NeedleLine,
    depth: f64,
    planner_error: Option<String>,
) -> crate::Result<EvalRecord> {
    let desired = forward_kinematics(commanded, params);
    let target = tip_on_plane(commanded, params, depth);
    let hit = line_plane_intersection(measured, target.z)?.position;
    Ok(EvalRecord {
        trial,
        commanded: *commanded,
        achieved: *achieved,
        target: [target.x, target.y, target.z],
        intersection: [hit.x, hit.y, hit.z],
        position_error_mm: position_error(&target, &hit)?,
        orientation_error_deg: orientation_error(&desired, measured),
        incline_deg: incline_angle(commanded, params),
        planner_error,
    })
}

fn run_trial(spec: &ExperimentSpec, registration: &RigidTransform, trial: usize, commanded: &CarriagePose) -> crate::Result<EvalRecord> {
    let params = &spec.robot.robot;
    let model = &spec.model;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(trial as u64 + 1);

    let (settled, planner_error) = drive(&spec.robot, spec.exec, commanded);
    let mut achieved = settled;
    achieved.x_u += model.axis_noise.x.sample(&mut rng);
    achieved.y_u += model.axis_noise.y.sample(&mut rng);
    achieved.x_l += model.axis_noise.x.sample(&mut rng);
    achieved.y_l += model.axis_noise.y.sample(&mut rng);

    // physical needle: through both bearings, deflected about the lower one
    let upper = achieved.upper_point(params);
    let lower = achieved.lower_point(params);
    let mut dir = (lower - upper).normalize();
    let incline = angle_between(&dir, &-Vector3::z());
    let sag = model.guide_sag_deg.to_radians() * incline.sin();
    let downhill = Vector3::new(dir.x, dir.y, 0.0);
    if sag > 0.0 && downhill.norm() > 0.0 {
        let axis = Unit::new_normalize(Vector3::z().cross(&downhill));
        dir = Rotation3::from_axis_angle(&axis, sag) * dir;
    }
    let sep = params.bearing_separation();
    let mut a = lower - dir * sep;
    let mut b = lower;
    if model.tracker_sigma_mm > 0.0 {
        let n = Normal::new(0.0, model.tracker_sigma_mm).map_err(|e| EvalError::InvalidModel(e.to_string()))?;
        for p in [&mut a, &mut b] {
            *p += Vector3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
        }
    }
    let measured = NeedleLine::through(registration.apply_point(&a), registration.apply_point(&b), Frame::Robot)?;
    score_trial(trial, params, commanded, &achieved, &measured, spec.depth_mm, planner_error)
}

/// Runs every trial of the experiment, in parallel on `jobs` threads (0 = all
/// cores). Reports do not depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> crate::Result<EvalReport> {
    spec.robot.validate()?;
    spec.model.validate()?;
    if !(spec.depth_mm.is_finite() && spec.depth_mm >= 0.0) {
        return Err(EvalError::InfeasibleSpec(format!("depth {} mm", spec.depth_mm)).into());
    }
    let params = &spec.robot.robot;
    let poses = generate_target_grid(&spec.grid, params)?;
    let (cx, cy) = params.travel().center();
    let pivot = Point3::new(cx, cy, params.z_lower - spec.depth_mm);
    let registration = registration_error(&spec.model, pivot);

    let run = || -> crate::Result<Vec<EvalRecord>> {
        poses
            .par_iter()
            .enumerate()
            .map(|(i, pose)| run_trial(spec, &registration, i, pose))
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let records = pool.install(run)?;

    let pos: Vec<f64> = records.iter().map(|r| r.position_error_mm).collect();
    let ori: Vec<f64> = records.iter().map(|r| r.orientation_error_deg).collect();
    let summary = EvalSummary {
        trials: records.len(),
        failed_trials: records.iter().filter(|r| r.planner_error.is_some()).count(),
        depth_mm: spec.depth_mm,
        seed: spec.model.seed,
        position_mm: Stat::of(&pos),
        orientation_deg: Stat::of(&ori),
        bins: bin_records(&records, INCLINE_BINS),
    };
    Ok(EvalReport { records, summary })
}

impl EvalReport {
    /// One row per trial.
    pub fn write_csv<W: Write>(&self, out: W) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "trial", "x_u", "y_u", "x_l", "y_l", "ach_x_u", "ach_y_u", "ach_x_l", "ach_y_l", "target_x", "target_y",
            "target_z", "hit_x", "hit_y", "hit_z", "position_error_mm", "orientation_error_deg", "incline_deg",
            "planner_error",
        ])?;
        let f = |v: f64| format!("{v:.9}");
        for r in &self.records {
            let mut row = vec![r.trial.to_string()];
            row.extend(r.commanded.to_array().into_iter().map(f));
            row.extend(r.achieved.to_array().into_iter().map(f));
            row.extend(r.target.into_iter().map(f));
            row.extend(r.intersection.into_iter().map(f));
            row.extend([r.position_error_mm, r.orientation_error_deg, r.incline_deg].map(f));
            row.push(r.planner_error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, out: W) -> crate::Result<()> {
        serde_json::to_writer_pretty(out, &self.summary)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_grid_has_234_feasible_poses() {
        let p = RobotParams::default();
        let poses = generate_target_grid(&TargetGridSpec::default(), &p).unwrap();
        assert_eq!(poses.len(), 234);
        assert!(poses.iter().all(|q| incline_angle(q, &p) <= 30.0 + 1e-9 && q.within_travel(&p, 0.0)));
        let top = poses.iter().map(|q| incline_angle(q, &p)).fold(0.0, f64::max);
        assert!(top > 29.0, "{top}");
    }

    #[test]
    fn single_center_pose_is_vertical() {
        let spec = TargetGridSpec {
            upper_cols: 1,
            upper_rows: 1,
            lower_cols: 1,
            lower_rows: 1,
            ..Default::default()
        };
        let p = RobotParams::default();
        let poses = generate_target_grid(&spec, &p).unwrap();
        assert_eq!(poses, vec![CarriagePose::new(0.0, 0.0, 0.0, 0.0)]);
        assert_eq!(incline_angle(&poses[0], &p), 0.0);
    }

    #[test]
    fn fixed_pitch_out_of_limits_is_infeasible() {
        let spec = TargetGridSpec {
            lower_pitch_mm: Some([40.0, 40.0]),
            ..Default::default()
        };
        let err = generate_target_grid(&spec, &RobotParams::default()).unwrap_err();
        assert_eq!(err.kind(), "InfeasibleSpec");
    }

    #[test]
    fn metric_examples() {
        let a = Point3::new(0.0, 0.0, -80.0);
        assert_eq!(position_error(&a, &a).unwrap(), 0.0);
        assert_relative_eq!(position_error(&a, &Point3::new(3.0, 4.0, -80.0)).unwrap(), 5.0);
        assert_eq!(position_error(&a, &Point3::new(0.0, 0.0, -81.0)).unwrap_err().kind(), "PlaneMismatch");
        let down = NeedleLine::through(Point3::origin(), Point3::new(0.0, 0.0, -1.0), Frame::Robot).unwrap();
        let tilted =
            NeedleLine::through(Point3::origin(), Point3::new(0.5, 0.0, -(3f64.sqrt()) / 2.0), Frame::Robot).unwrap();
        assert_eq!(orientation_error(&down, &down), 0.0);
        assert_relative_eq!(orientation_error(&down, &tilted), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn bins_partition_records() {
        let spec = ExperimentSpec::default();
        let report = run_experiment(&spec, 1).unwrap();
        let bins = &report.summary.bins;
        assert_eq!(bins.len(), INCLINE_BINS);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 234);
        for w in bins.windows(2) {
            assert_relative_eq!(w[0].hi_deg, w[1].lo_deg, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let report = run_experiment(&ExperimentSpec::default(), 0).unwrap();
        for r in &report.records {
            assert!(r.position_error_mm < 1e-9 && r.orientation_error_deg < 1e-9, "{r:?}");
            assert!(r.planner_error.is_none());
        }
    }

    #[test]
    fn stat_sample_std() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(s.mean, 2.5);
        assert_relative_eq!(s.std, (5.0f64 / 3.0).sqrt());
    }
}
