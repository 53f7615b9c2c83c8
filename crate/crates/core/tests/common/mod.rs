#![allow(dead_code)]

use mrguide_core::{incline_angle, CarriagePose, RobotParams};
use rand::Rng;

pub fn random_feasible_pose<R: Rng>(rng: &mut R, p: &RobotParams) -> CarriagePose {
    let t = p.travel();
    let (xr, yr) = (t.x_range(), t.y_range());
    loop {
        let q = CarriagePose::new(
            rng.random_range(xr.0..=xr.1),
            rng.random_range(yr.0..=yr.1),
            rng.random_range(xr.0..=xr.1),
            rng.random_range(yr.0..=yr.1),
        );
        if incline_angle(&q, p) <= p.max_incline_deg {
            return q;
        }
    }
}

/// Point at height `z` on the line through the two bearing centers of `pose`,
/// found by stepping along the segment direction.
pub fn point_on_guide_line(p: &RobotParams, pose: &CarriagePose, z: f64) -> nalgebra::Point3<f64> {
    let u = pose.upper_point(p);
    let l = pose.lower_point(p);
    let t = (z - u.z) / (l.z - u.z);
    u + (l - u) * t
}
