use mrguide_core::{fit_rigid_transform, FiducialPair, FiducialSet, Frame, RigidTransform};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_transform<R: Rng>(rng: &mut R) -> RigidTransform {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis };
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let t = Vector3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
    RigidTransform::from_axis_angle(axis, angle, t, Frame::Mr, Frame::Robot).unwrap()
}

fn random_fiducials<R: Rng>(rng: &mut R, n: usize) -> Vec<Point3<f64>> {
    loop {
        let pts: Vec<_> = (0..n)
            .map(|_| Point3::new(rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0)))
            .collect();
        // keep well-spread triangles
        let area = (pts[1] - pts[0]).cross(&(pts[2] - pts[0])).norm();
        if area > 500.0 {
            return pts;
        }
    }
}

#[test]
fn thousand_random_transforms_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let truth = random_transform(&mut rng);
        let n = rng.random_range(3..7);
        let pts = random_fiducials(&mut rng, n);
        let pairs = pts.iter().map(|p| FiducialPair::new(*p, truth.apply_point(p))).collect();
        let reg = fit_rigid_transform(&FiducialSet::new(pairs).unwrap()).unwrap();
        assert!(reg.rms_residual < 1e-9, "{}", reg.rms_residual);
        for probe in [Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, -50.0, 30.0)] {
            let err = (reg.transform.apply_point(&probe) - truth.apply_point(&probe)).norm();
            assert!(err < 1e-9, "{err}");
        }
    }
}

#[test]
fn collinear_fiducials_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let a = Point3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), 0.0);
        let d = Vector3::new(1.0, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let pairs = (0..4)
            .map(|i| {
                let p = a + d * (i as f64 * 10.0);
                FiducialPair::new(p, p)
            })
            .collect();
        let err = FiducialSet::new(pairs).unwrap_err();
        assert_eq!(err.kind(), "DegenerateFiducials");
    }
}

proptest! {
    #[test]
    fn inverse_composes_to_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_transform(&mut rng);
        let id = t.inverse().compose(&t).unwrap();
        prop_assert_eq!(id.from_frame(), Frame::Mr);
        prop_assert_eq!(id.to_frame(), Frame::Mr);
        let p = Point3::new(12.0, -3.0, 40.0);
        prop_assert!((id.apply_point(&p) - p).norm() < 1e-9);
    }

    #[test]
    fn noisy_fit_residual_is_small(seed in any::<u64>(), sigma in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_transform(&mut rng);
        let pts = random_fiducials(&mut rng, 5);
        let pairs = pts
            .iter()
            .map(|p| {
                let n = Vector3::new(rng.random_range(-sigma..=sigma), rng.random_range(-sigma..=sigma), rng.random_range(-sigma..=sigma));
                FiducialPair::new(*p, truth.apply_point(p) + n)
            })
            .collect();
        let reg = fit_rigid_transform(&FiducialSet::new(pairs).unwrap()).unwrap();
        // least squares never does worse than the true transform
        prop_assert!(reg.rms_residual <= sigma * 3f64.sqrt() + 1e-9);
    }
}
