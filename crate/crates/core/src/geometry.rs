//! Frame-tagged points, rigid transforms, needle lines and fiducial registration.
//!
//! All lengths are millimeters. Angles are radians internally.

use std::fmt;

use nalgebra::{Matrix3, Point3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating rotation matrices and unit vectors.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Directions with a smaller z-component are treated as parallel to a z = const plane.
pub const PARALLEL_TOL: f64 = 1e-12;

/// Fiducial sets whose second singular value falls below this fraction of the
/// first are rejected as collinear.
pub const COLLINEARITY_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("frame mismatch: expected {expected}, got {actual}")]
    FrameMismatch { expected: Frame, actual: Frame },
    #[error("need at least 3 fiducial pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("fiducials are collinear or coincident (singular value ratio {ratio:.3e})")]
    DegenerateFiducials { ratio: f64 },
    #[error("line direction is parallel to the plane z = {plane_z}")]
    ParallelToPlane { plane_z: f64 },
    #[error("matrix is not a proper rotation (orthogonality error {orthogonality:.3e}, det {det})")]
    NotARotation { orthogonality: f64, det: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("zero-length direction")]
    ZeroDirection,
}

impl GeometryError {
    pub fn kind(&self) -> &'static str {
        match self {
            GeometryError::FrameMismatch { .. } => "FrameMismatch",
            GeometryError::InsufficientPairs(_) => "InsufficientPairs",
            GeometryError::DegenerateFiducials { .. } => "DegenerateFiducials",
            GeometryError::ParallelToPlane { .. } => "ParallelToPlane",
            GeometryError::NotARotation { .. } => "NotARotation",
            GeometryError::NonFinite => "NonFinite",
            GeometryError::ZeroDirection => "ZeroDirection",
        }
    }
}

/// Coordinate frame a quantity is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Robot,
    Mr,
    /// A target plane at the given z (robot frame, mm).
    Plane(f64),
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Robot => write!(f, "robot"),
            Frame::Mr => write!(f, "mr"),
            Frame::Plane(z) => write!(f, "plane(z={z})"),
        }
    }
}

/// A point together with the frame it lives in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramedPoint {
    pub frame: Frame,
    pub position: Point3<f64>,
}

impl FramedPoint {
    pub fn new(frame: Frame, x: f64, y: f64, z: f64) -> Self {
        Self {
            frame,
            position: Point3::new(x, y, z),
        }
    }

    pub fn robot(x: f64, y: f64, z: f64) -> Self {
        Self::new(Frame::Robot, x, y, z)
    }

    pub fn mr(x: f64, y: f64, z: f64) -> Self {
        Self::new(Frame::Mr, x, y, z)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
    }

    pub fn expect_frame(&self, frame: Frame) -> Result<(), GeometryError> {
        if self.frame == frame {
            Ok(())
        } else {
            Err(GeometryError::FrameMismatch {
                expected: frame,
                actual: self.frame,
            })
        }
    }
}

/// Proper rigid motion `p -> R p + t` from one frame into another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    from: Frame,
    to: Frame,
}

impl RigidTransform {
    pub fn identity(from: Frame, to: Frame) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            from,
            to,
        }
    }

    /// Builds a transform, rejecting matrices that are not proper rotations.
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        from: Frame,
        to: Frame,
    ) -> Result<Self, GeometryError> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let orthogonality = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if orthogonality > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::NotARotation { orthogonality, det });
        }
        Ok(Self {
            rotation,
            translation,
            from,
            to,
        })
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(
        axis: Vector3<f64>,
        angle: f64,
        translation: Vector3<f64>,
        from: Frame,
        to: Frame,
    ) -> Result<Self, GeometryError> {
        let axis = Unit::try_new(axis, 1e-15).ok_or(GeometryError::ZeroDirection)?;
        let rotation = Rotation3::from_axis_angle(&axis, angle).into_inner();
        Self::new(rotation, translation, from, to)
    }

    /// Rotation by `angle` about `axis` through `pivot`, then translation.
    pub fn about_pivot(
        axis: Vector3<f64>,
        angle: f64,
        pivot: Point3<f64>,
        translation: Vector3<f64>,
        from: Frame,
        to: Frame,
    ) -> Result<Self, GeometryError> {
        let rot = Self::from_axis_angle(axis, angle, Vector3::zeros(), from, to)?;
        let t = pivot.coords - rot.rotation * pivot.coords + translation;
        Self::new(rot.rotation, t, from, to)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn from_frame(&self) -> Frame {
        self.from
    }

    pub fn to_frame(&self) -> Frame {
        self.to
    }

    /// Unit quaternion as `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        [q.w, q.i, q.j, q.k]
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn apply(&self, p: &FramedPoint) -> Result<FramedPoint, GeometryError> {
        p.expect_frame(self.from)?;
        Ok(FramedPoint {
            frame: self.to,
            position: self.apply_point(&p.position),
        })
    }

    /// Applies the transform to an untagged point.
    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
            from: self.to,
            to: self.from,
        }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> Result<Self, GeometryError> {
        if first.to != self.from {
            return Err(GeometryError::FrameMismatch {
                expected: self.from,
                actual: first.to,
            });
        }
        Ok(Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
            from: first.from,
            to: self.to,
        })
    }
}

/// Line in 3D with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedleLine {
    pub origin: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
    pub frame: Frame,
}

impl NeedleLine {
    /// Line through `a` towards `b`, with the direction oriented downward (z < 0)
    /// whenever the segment is not horizontal.
    pub fn through(a: Point3<f64>, b: Point3<f64>, frame: Frame) -> Result<Self, GeometryError> {
        let mut d = b - a;
        if d.z > 0.0 {
            d = -d;
        }
        let direction = Unit::try_new(d, 1e-15).ok_or(GeometryError::ZeroDirection)?;
        Ok(Self {
            origin: a,
            direction,
            frame,
        })
    }

    pub fn point_at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction.into_inner() * t
    }

    /// Perpendicular distance from `p` to the (infinite) line.
    pub fn distance_to(&self, p: &Point3<f64>) -> f64 {
        let v = p - self.origin;
        v.cross(&self.direction).norm()
    }

    /// Maps the line through a rigid transform.
    pub fn transformed(&self, t: &RigidTransform) -> Result<Self, GeometryError> {
        if self.frame != t.from {
            return Err(GeometryError::FrameMismatch {
                expected: t.from,
                actual: self.frame,
            });
        }
        let mut d = t.apply_vector(&self.direction);
        if d.z > 0.0 {
            d = -d;
        }
        Ok(Self {
            origin: t.apply_point(&self.origin),
            direction: Unit::new_normalize(d),
            frame: t.to,
        })
    }
}

/// Unsigned distance from `p` to the plane z = `plane_z`.
pub fn point_to_plane_distance(p: &Point3<f64>, plane_z: f64) -> f64 {
    (p.z - plane_z).abs()
}

/// Intersection of `line` with the plane z = `plane_z`, tagged with the line's frame.
pub fn line_plane_intersection(line: &NeedleLine, plane_z: f64) -> Result<FramedPoint, GeometryError> {
    let dz = line.direction.z;
    if dz.abs() < PARALLEL_TOL {
        return Err(GeometryError::ParallelToPlane { plane_z });
    }
    let t = (plane_z - line.origin.z) / dz;
    let mut p = line.point_at(t);
    // the z coordinate is exact by construction
    p.z = plane_z;
    Ok(FramedPoint {
        frame: line.frame,
        position: p,
    })
}

/// Unsigned angle between two directions, radians.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    // atan2 form keeps precision for tiny angles where acos(dot) does not
    a.cross(b).norm().atan2(a.dot(b))
}

/// One fiducial measured in both frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiducialPair {
    pub mr: [f64; 3],
    pub robot: [f64; 3],
}

impl FiducialPair {
    pub fn new(mr: Point3<f64>, robot: Point3<f64>) -> Self {
        Self {
            mr: [mr.x, mr.y, mr.z],
            robot: [robot.x, robot.y, robot.z],
        }
    }

    pub fn mr_point(&self) -> Point3<f64> {
        Point3::from(self.mr)
    }

    pub fn robot_point(&self) -> Point3<f64> {
        Point3::from(self.robot)
    }
}

/// Validated set of at least three non-collinear fiducial pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiducialSet {
    pairs: Vec<FiducialPair>,
}

#[derive(Deserialize)]
struct FiducialDoc {
    pairs: Vec<FiducialPair>,
}

impl FiducialSet {
    pub fn new(pairs: Vec<FiducialPair>) -> Result<Self, GeometryError> {
        if pairs.len() < 3 {
            return Err(GeometryError::InsufficientPairs(pairs.len()));
        }
        if !pairs
            .iter()
            .all(|p| p.mr.iter().chain(p.robot.iter()).all(|c| c.is_finite()))
        {
            return Err(GeometryError::NonFinite);
        }
        let mr: Vec<_> = pairs.iter().map(FiducialPair::mr_point).collect();
        let robot: Vec<_> = pairs.iter().map(FiducialPair::robot_point).collect();
        let ratio = spread_ratio(&mr).min(spread_ratio(&robot));
        if ratio < COLLINEARITY_RATIO {
            return Err(GeometryError::DegenerateFiducials { ratio });
        }
        Ok(Self { pairs })
    }

    /// Parses `{"pairs": [{"mr": [x,y,z], "robot": [x,y,z]}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self, crate::Error> {
        let doc: FiducialDoc = serde_json::from_str(text)?;
        Ok(Self::new(doc.pairs)?)
    }

    pub fn pairs(&self) -> &[FiducialPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn centroid(points: &[Point3<f64>]) -> Point3<f64> {
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / points.len() as f64)
}

/// Second singular value over the first of the centered coordinates; 0 for
/// coincident or collinear sets.
fn spread_ratio(points: &[Point3<f64>]) -> f64 {
    let c = centroid(points);
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    });
    // eigenvalues of the scatter matrix are the squared singular values
    let mut eig: Vec<f64> = scatter
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    if eig[0] <= 0.0 {
        0.0
    } else {
        eig[1] / eig[0]
    }
}

/// Result of a fiducial registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub transform: RigidTransform,
    /// Root-mean-square distance between mapped MR fiducials and their robot counterparts.
    pub rms_residual: f64,
}

/// Proper rotation minimising `Σ |R·a − b|²` for centered point sets.
fn kabsch_rotation(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<Matrix3<f64>, GeometryError> {
    let h = a
        .iter()
        .zip(b)
        .fold(Matrix3::zeros(), |acc, (p, q)| acc + p * q.transpose());
    let svd = h.try_svd(true, true, f64::EPSILON, 0).ok_or(GeometryError::NonFinite)?;
    let u = svd.u.ok_or(GeometryError::NonFinite)?;
    let v_t = svd.v_t.ok_or(GeometryError::NonFinite)?;
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    Ok(v_t.transpose() * correction * u.transpose())
}

/// Least-squares rigid fit mapping MR fiducials onto robot fiducials.
///
/// Uses the SVD of the cross-covariance of the centered point sets. A reflection
/// is excluded by flipping the sign of the least significant singular direction.
pub fn fit_rigid_transform(set: &FiducialSet) -> Result<Registration, GeometryError> {
    let mr: Vec<_> = set.pairs.iter().map(FiducialPair::mr_point).collect();
    let robot: Vec<_> = set.pairs.iter().map(FiducialPair::robot_point).collect();
    let c_mr = centroid(&mr);
    let c_robot = centroid(&robot);

    let a: Vec<Vector3<f64>> = mr.iter().map(|p| p - c_mr).collect();
    let b: Vec<Vector3<f64>> = robot.iter().map(|p| p - c_robot).collect();
    let mut rotation = kabsch_rotation(&a, &b)?;
    // Gauss-Newton on the residuals: the SVD alone leaves ~1e-9 rad of error
    // about the long axis of thin fiducial triangles
    for _ in 0..3 {
        let (mut m, mut g) = (Matrix3::zeros(), Vector3::zeros());
        for (p, q) in a.iter().zip(&b) {
            let r = rotation * p;
            m += Matrix3::identity() * r.norm_squared() - r * r.transpose();
            g += r.cross(&(q - r));
        }
        let Some(w) = m.cholesky().map(|c| c.solve(&g)) else { break };
        if !(w.norm() > 0.0) {
            break;
        }
        rotation = Rotation3::new(w).into_inner() * rotation;
    }
    let translation = c_robot.coords - rotation * c_mr.coords;

    let transform = RigidTransform::new(rotation, translation, Frame::Mr, Frame::Robot)?;
    let sq: f64 = mr
        .iter()
        .zip(&robot)
        .map(|(a, b)| (transform.apply_point(a) - b).norm_squared())
        .sum();
    Ok(Registration {
        transform,
        rms_residual: (sq / mr.len() as f64).sqrt(),
    })
}
