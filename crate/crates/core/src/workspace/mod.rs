//! Reachable needle workspace: a frustum bounded by carriage travel and the
//! incline limit, plus its volumetric overlap with an organ mesh.

mod mesh;

use std::io::Write;

use nalgebra::{Point3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{tip_on_plane, CarriagePose, KinematicsError, RobotParams};

pub use mesh::TriMesh;

/// Default voxel pitch for coverage, mm.
pub const DEFAULT_VOXEL_PITCH: f64 = 2.0;

/// Stand-in organ volume, mm³ (1147 ml).
pub const STANDIN_ORGAN_VOLUME_MM3: f64 = 1_147_000.0;

/// Abdominal wall thickness applied as a mesh offset, mm.
pub const DEFAULT_STANDOFF_MM: f64 = 25.0;

const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkspaceError {
    #[error("constraints admit no carriage pose")]
    EmptyWorkspace,
    #[error("mesh is not closed: {0}")]
    OpenMesh(String),
    #[error("mesh encloses zero volume")]
    ZeroVolume,
    #[error("invalid depth range [{0}, {1}] mm")]
    InvalidDepth(f64, f64),
    #[error("invalid resolution {0} mm")]
    InvalidResolution(f64),
    #[error("stl: {0}")]
    Stl(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

impl WorkspaceError {
    pub fn kind(&self) -> &'static str {
        match self {
            WorkspaceError::EmptyWorkspace => "EmptyWorkspace",
            WorkspaceError::OpenMesh(_) => "OpenMesh",
            WorkspaceError::ZeroVolume => "ZeroVolume",
            WorkspaceError::InvalidDepth(..) => "InvalidDepth",
            WorkspaceError::InvalidResolution(_) => "InvalidResolution",
            WorkspaceError::Stl(_) => "Stl",
            WorkspaceError::Kinematics(e) => e.kind(),
        }
    }
}

/// One workspace sample: where a feasible needle line crosses a depth plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudSample {
    pub point: [f64; 3],
    /// Depth below the lower bearing plane, mm.
    pub depth: f64,
    /// Index into [`WorkspaceCloud::poses`].
    pub pose: usize,
}

/// Sampled reachable workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceCloud {
    pub params: RobotParams,
    pub depth_range: [f64; 2],
    pub resolution: f64,
    pub poses: Vec<CarriagePose>,
    pub samples: Vec<CloudSample>,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if hi - v[n] > 1e-9 {
        v.push(hi);
    }
    v
}

/// Grid-samples carriage pose space at `resolution`, drops poses beyond the
/// incline limit and projects each remaining needle line onto every depth plane
/// in `depth_range` (spaced by `resolution`, endpoints included).
pub fn sample_workspace(params: &RobotParams, depth_range: [f64; 2], resolution: f64) -> Result<WorkspaceCloud, WorkspaceError> {
    params.validate()?;
    let [d0, d1] = depth_range;
    if !(d0.is_finite() && d1.is_finite() && d0 >= 0.0 && d1 >= d0) {
        return Err(WorkspaceError::InvalidDepth(d0, d1));
    }
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(WorkspaceError::InvalidResolution(resolution));
    }
    let travel = params.travel();
    let (xr, yr) = (travel.x_range(), travel.y_range());
    let xs = grid(xr.0, xr.1, resolution);
    let ys = grid(yr.0, yr.1, resolution);
    let depths = if d1 > d0 { grid(d0, d1, resolution) } else { vec![d0] };
    let carriage: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let r = params.max_relative_displacement();

    let poses: Vec<CarriagePose> = carriage
        .par_iter()
        .flat_map_iter(|&(xu, yu)| {
            carriage.iter().filter_map(move |&(xl, yl)| {
                let d = Vector2::new(xu - xl, yu - yl);
                (d.norm() <= r + MEMBERSHIP_TOL).then_some(CarriagePose::new(xu, yu, xl, yl))
            })
        })
        .collect();
    if poses.is_empty() {
        return Err(WorkspaceError::EmptyWorkspace);
    }
    let samples = poses
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, pose)| {
            depths.iter().map(move |&d| {
                let p = tip_on_plane(pose, params, d);
                CloudSample { point: [p.x, p.y, p.z], depth: d, pose: i }
            })
        })
        .collect();
    Ok(WorkspaceCloud { params: *params, depth_range: [d0, d1], resolution, poses, samples })
}

/// Whether some pose within travel and incline limits puts the needle line
/// through `(x, y)` at `depth` mm below the lower bearing plane.
///
/// With relative displacement `w = lower − upper` and `s = depth / separation`,
/// the line crosses the plane at `lower + s·w`, so `lower = p − s·w` and
/// `upper = p − (1 + s)·w`. Each carriage constraint bounds `w` to a box; the
/// point is reachable when the intersection of both boxes meets the disc `|w| ≤ r`.
pub fn frustum_contains(params: &RobotParams, x: f64, y: f64, depth: f64) -> bool {
    if !(depth >= 0.0) {
        return false;
    }
    let travel = params.travel();
    let s = depth / params.bearing_separation();
    let r = params.max_relative_displacement();
    let axis_box = |p: f64, (lo, hi): (f64, f64)| -> Option<(f64, f64)> {
        // upper: p − (1+s)w ∈ [lo, hi]
        let k = 1.0 + s;
        let (mut a, mut b) = ((p - hi) / k, (p - lo) / k);
        if s > 0.0 {
            a = a.max((p - hi) / s);
            b = b.min((p - lo) / s);
        } else if p < lo - MEMBERSHIP_TOL || p > hi + MEMBERSHIP_TOL {
            return None;
        }
        (a <= b + MEMBERSHIP_TOL).then_some((a, b.max(a)))
    };
    let Some((ax, bx)) = axis_box(x, travel.x_range()) else { return false };
    let Some((ay, by)) = axis_box(y, travel.y_range()) else { return false };
    let cx = 0.0_f64.clamp(ax, bx);
    let cy = 0.0_f64.clamp(ay, by);
    cx.hypot(cy) <= r + MEMBERSHIP_TOL
}

/// Tip position on the plane `depth` mm below the lower bearing, for a pose.
pub fn sample_point(params: &RobotParams, pose: &CarriagePose, depth: f64) -> Point3<f64> {
    tip_on_plane(pose, params, depth)
}

impl WorkspaceCloud {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Analytic membership within this cloud's depth range.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let depth = self.params.z_lower - p.z;
        let [d0, d1] = self.depth_range;
        depth >= d0 - MEMBERSHIP_TOL && depth <= d1 + MEMBERSHIP_TOL && frustum_contains(&self.params, p.x, p.y, depth.max(0.0))
    }

    /// Largest |x| among samples on the given depth plane.
    pub fn max_lateral_extent(&self, depth: f64) -> Option<f64> {
        self.samples
            .iter()
            .filter(|s| (s.depth - depth).abs() < 1e-9)
            .map(|s| s.point[0].abs())
            .max_by(f64::total_cmp)
    }

    /// `x,y,z` rows, mm.
    pub fn write_csv<W: Write>(&self, out: W) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "z"])?;
        for s in &self.samples {
            w.write_record(s.point.iter().map(|v| format!("{v:.6}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> crate::Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }
}

/// Voxel counts behind a coverage ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub ratio: f64,
    pub reachable_voxels: usize,
    pub total_voxels: usize,
    pub pitch_mm: f64,
    pub standoff_mm: f64,
}

/// Fraction of the organ volume reachable by the needle, after pushing the mesh
/// `standoff` mm further from the robot (down in z).
pub fn coverage_ratio(cloud: &WorkspaceCloud, organ: &TriMesh, standoff: f64, pitch: f64) -> Result<Coverage, WorkspaceError> {
    if cloud.is_empty() {
        return Err(WorkspaceError::EmptyWorkspace);
    }
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(WorkspaceError::InvalidResolution(pitch));
    }
    let shifted = organ.translated(Vector3::new(0.0, 0.0, -standoff));
    let voxels = shifted.voxel_centers(pitch);
    if voxels.is_empty() {
        return Err(WorkspaceError::ZeroVolume);
    }
    let reachable = voxels.par_iter().filter(|p| cloud.contains(p)).count();
    Ok(Coverage {
        ratio: reachable as f64 / voxels.len() as f64,
        reachable_voxels: reachable,
        total_voxels: voxels.len(),
        pitch_mm: pitch,
        standoff_mm: standoff,
    })
}

/// Ellipsoid of 1147 ml whose top touches the lower bearing plane, centered
/// under the travel rectangles. Semi-axis proportions 1 : 0.75 : 0.45.
pub fn standin_organ(params: &RobotParams) -> Result<TriMesh, WorkspaceError> {
    let unit = Vector3::new(1.0, 0.75, 0.45);
    let base = TriMesh::ellipsoid(Point3::origin(), unit, 32, 64)?;
    let scale = (STANDIN_ORGAN_VOLUME_MM3 / base.volume()).cbrt();
    let (cx, cy) = params.travel().center();
    Ok(base.scaled(scale).translated(Vector3::new(cx, cy, params.z_lower - unit.z * scale)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn lower_plane_cross_section_is_lower_grid() {
        let p = params();
        let cloud = sample_workspace(&p, [0.0, 0.0], 5.0).unwrap();
        let mut pts: Vec<(i64, i64)> = cloud
            .samples
            .iter()
            .map(|s| ((s.point[0] * 1e6).round() as i64, (s.point[1] * 1e6).round() as i64))
            .collect();
        pts.sort();
        pts.dedup();
        let xs = grid(-27.5, 27.5, 5.0);
        let ys = grid(-15.0, 15.0, 5.0);
        assert_eq!(pts.len(), xs.len() * ys.len());
    }

    #[test]
    fn samples_respect_incline() {
        let p = params();
        let cloud = sample_workspace(&p, [0.0, 50.0], 5.0).unwrap();
        for pose in &cloud.poses {
            assert!(crate::incline_angle(pose, &p) <= 30.0 + 1e-9);
        }
        for s in &cloud.samples {
            assert!(frustum_contains(&p, s.point[0], s.point[1], s.depth));
        }
    }

    #[test]
    fn lateral_extent_bound() {
        let p = params();
        let t30 = 30f64.to_radians().tan();
        for d in [0.0, 40.0, 100.0] {
            let edge = 27.5 + d * t30;
            assert!(frustum_contains(&p, edge - 1e-6, 0.0, d));
            assert!(!frustum_contains(&p, edge + 1e-6, 0.0, d));
        }
    }

    #[test]
    fn tiny_incline_leaves_vertical_poses() {
        let p = RobotParams {
            max_incline_deg: 0.01,
            ..params()
        };
        let cloud = sample_workspace(&p, [0.0, 10.0], 5.0).unwrap();
        assert!(cloud.poses.iter().all(|q| q.relative_displacement().norm() == 0.0));
    }

    #[test]
    fn rejects_bad_depth() {
        let err = sample_workspace(&params(), [10.0, 5.0], 1.0).unwrap_err();
        assert_eq!(err.kind(), "InvalidDepth");
    }

    #[test]
    fn standin_volume() {
        let m = standin_organ(&params()).unwrap();
        assert_relative_eq!(m.volume(), STANDIN_ORGAN_VOLUME_MM3, max_relative = 1e-9);
        let (_, hi) = m.bounds();
        assert_relative_eq!(hi.z, params().z_lower, epsilon = 1e-6);
    }

    #[test]
    fn coverage_extremes() {
        let p = params();
        let cloud = sample_workspace(&p, [0.0, 100.0], 10.0).unwrap();
        let z = p.z_lower;
        let inside = TriMesh::cuboid(Point3::new(-5.0, -5.0, z - 60.0), Point3::new(5.0, 5.0, z - 20.0)).unwrap();
        assert_eq!(coverage_ratio(&cloud, &inside, 0.0, 2.0).unwrap().ratio, 1.0);
        let outside = inside.translated(Vector3::new(500.0, 0.0, 0.0));
        assert_eq!(coverage_ratio(&cloud, &outside, 0.0, 2.0).unwrap().ratio, 0.0);
    }
}
