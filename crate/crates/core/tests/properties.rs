use nalgebra::Vector3;
use proptest::prelude::*;

use stereo6d::geometry::{depth_to_disparity, disparity_to_depth, rotation_geodesic, Pose};
use stereo6d::posesolve::kabsch_fit;

fn pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(-500.0f64..500.0))
        .prop_map(|(w, t)| Pose::from_axis_angle(Vector3::from(w), Vector3::from(t)))
}

fn cloud() -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(prop::array::uniform3(-100.0f64..100.0).prop_map(Vector3::from), 4..30)
}

proptest! {
    #[test]
    fn compose_with_inverse_is_identity(p in pose(), x in prop::array::uniform3(-200.0f64..200.0)) {
        let x = Vector3::from(x);
        let back = p.inverse().transform_point(&p.transform_point(&x));
        prop_assert!((back - x).norm() < 1e-9);
    }

    #[test]
    fn kabsch_recovers_rigid_motion(p in pose(), pts in cloud()) {
        // skip nearly collinear clouds
        let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
        let cov = pts.iter().fold(nalgebra::Matrix3::zeros(), |m, q| m + (q - c) * (q - c).transpose());
        let sv = cov.symmetric_eigenvalues();
        let mut s = [sv[0], sv[1], sv[2]];
        s.sort_by(f64::total_cmp);
        prop_assume!(s[1] > 1e-3 * s[2]);
        let dst: Vec<_> = pts.iter().map(|q| p.transform_point(q)).collect();
        let fit = kabsch_fit(&pts, &dst, None).unwrap();
        prop_assert!(rotation_geodesic(&fit.rotation, &p.rotation).unwrap() < 1e-6);
        prop_assert!((fit.translation - p.translation).norm() < 1e-6);
    }

    #[test]
    fn disparity_depth_involution(z in 1.0f64..1e5, f in 50.0f64..5000.0, b in 1.0f64..1000.0) {
        let z2 = disparity_to_depth(depth_to_disparity(z, f, b).unwrap(), f, b).unwrap();
        prop_assert!((z2 - z).abs() <= 1e-12 * z);
    }
}
