use nalgebra::{UnitQuaternion, Vector3};

use super::kabsch::kabsch_ransac;
use super::pnp::{joint_stereo_pnp, pnp_solve, reprojection_stats, Camera};
use super::refine::{refine_problem, DepthTerm, Observation, RefineProblem};
use super::{Correspondence, CorrespondenceSet, FusionStrategy, PoseEstimate, SolveError, SolverParams, View};
use crate::geometry::{backproject, Pose, StereoRig};
use crate::stereomatch::DisparityMap;

/// Everything a strategy may consume for one object in one stereo frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameInputs<'a> {
    /// Left- and right-view correspondences, distinguished by view tag.
    pub correspondences: &'a CorrespondenceSet,
    pub rig: &'a StereoRig,
    /// Left-referenced disparity map.
    pub disparity: Option<&'a DisparityMap>,
}

/// Left correspondence lifted to a camera-frame point with disparity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedPoint {
    /// Position within the left-view correspondence list.
    pub index: usize,
    pub object: Vector3<f64>,
    pub camera_point: Vector3<f64>,
    pub weight: f64,
}

/// `Z = f·B/d` at each correspondence pixel, then backprojection. Pixels
/// without a valid disparity are skipped.
pub fn lift_correspondences(left: &[Correspondence], disparity: &DisparityMap, rig: &StereoRig) -> Result<Vec<LiftedPoint>, SolveError> {
    rig.require_rectified()?;
    let fb = rig.left.fx * rig.baseline();
    let mut out = Vec::new();
    for (index, c) in left.iter().enumerate() {
        let Some(d) = disparity.sample(c.pixel.x, c.pixel.y) else {
            continue;
        };
        if !(d > 0.0) {
            continue;
        }
        let camera_point = backproject(&c.pixel, fb / d, &rig.left)?;
        out.push(LiftedPoint {
            index,
            object: c.object,
            camera_point,
            weight: c.weight,
        });
    }
    Ok(out)
}

/// Lifts left-view correspondences with disparity and aligns them to the
/// object points with RANSAC Kabsch.
pub fn disparity_3d3d_solve(
    corrs: &CorrespondenceSet,
    disparity: &DisparityMap,
    rig: &StereoRig,
    params: &SolverParams,
) -> Result<PoseEstimate, SolveError> {
    let left = corrs.view(View::Left);
    let lifts = lift_correspondences(&left, disparity, rig)?;
    if lifts.len() < 3 {
        return Err(SolveError::InsufficientData { needed: 3, got: lifts.len() });
    }
    let pairs: Vec<_> = lifts.iter().map(|l| (l.object, l.camera_point)).collect();
    let weights: Vec<f64> = lifts.iter().map(|l| l.weight).collect();
    let mut est = kabsch_ransac(&pairs, Some(&weights), params)?;
    let lcam = Camera {
        k: rig.left,
        from_left: Pose::identity(),
        view: View::Left,
    };
    let lifted_corrs: Vec<Correspondence> = lifts.iter().map(|l| left[l.index]).collect();
    est.reprojection_px_left = reprojection_stats(&est.pose, &[lcam], &[&lifted_corrs], &est.inliers)[0];
    est.strategy = FusionStrategy::Disparity3d3d;
    Ok(est)
}

/// Chordal mean of two rotations: quaternion sum after sign alignment.
pub(crate) fn chordal_mean(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let qa = a.into_inner();
    let mut qb = b.into_inner();
    if qa.dot(&qb) < 0.0 {
        qb = -qb;
    }
    UnitQuaternion::from_quaternion(qa + qb)
}

/// Combines a left-frame estimate with a right-frame estimate. Falls back to
/// whichever input converged (flagged) when the other did not.
pub fn fuse_late(pose_left: &PoseEstimate, pose_right: &PoseEstimate, rig: &StereoRig) -> PoseEstimate {
    let right_in_left = rig.to_left(&pose_right.pose);
    match (pose_left.converged, pose_right.converged) {
        (true, false) | (false, false) => {
            let mut out = pose_left.clone();
            out.strategy = FusionStrategy::LatePoseCombine;
            out.fallback = true;
            return out;
        }
        (false, true) => {
            let mut out = pose_right.clone();
            out.pose = right_in_left;
            out.reprojection_px_right = pose_right.reprojection_px_left;
            out.reprojection_px_left = None;
            out.strategy = FusionStrategy::LatePoseCombine;
            out.fallback = true;
            return out;
        }
        (true, true) => {}
    }
    let q = chordal_mean(&pose_left.pose.quaternion(), &right_in_left.quaternion());
    let translation = (pose_left.pose.translation + right_in_left.translation) * 0.5;
    let inlier_count = pose_left.inlier_count + pose_right.inlier_count;
    let correspondence_count = pose_left.correspondence_count + pose_right.correspondence_count;
    let mut inliers = pose_left.inliers.clone();
    inliers.extend_from_slice(&pose_right.inliers);
    PoseEstimate {
        pose: Pose::from_quaternion(&q, translation),
        inlier_count,
        correspondence_count,
        inlier_ratio: if correspondence_count > 0 {
            inlier_count as f64 / correspondence_count as f64
        } else {
            0.0
        },
        reprojection_px_left: pose_left.reprojection_px_left,
        reprojection_px_right: pose_right.reprojection_px_left,
        residual_mm: None,
        strategy: FusionStrategy::LatePoseCombine,
        converged: true,
        fallback: false,
        inliers,
    }
}

fn require_disparity<'a>(strategy: FusionStrategy, inputs: &FrameInputs<'a>) -> Result<&'a DisparityMap, SolveError> {
    inputs
        .disparity
        .ok_or_else(|| SolveError::Configuration(format!("strategy {strategy} requires a disparity map")))
}

fn late(inputs: &FrameInputs, params: &SolverParams) -> Result<PoseEstimate, SolveError> {
    let rig = inputs.rig;
    let left = CorrespondenceSet::from_entries(inputs.correspondences.view(View::Left))?;
    let right = CorrespondenceSet::from_entries(inputs.correspondences.view(View::Right))?;
    let left_est = pnp_solve(&left, &rig.left, params);
    let right_est = if right.len() >= 4 {
        pnp_solve(&right, &rig.right, params).ok()
    } else {
        None
    };
    match (left_est, right_est) {
        (Ok(l), Some(r)) => Ok(fuse_late(&l, &r, rig)),
        (Ok(mut l), None) => {
            l.strategy = FusionStrategy::LatePoseCombine;
            l.fallback = true;
            Ok(l)
        }
        (Err(_), Some(r)) if r.converged => {
            let mut failed = r.clone();
            failed.converged = false;
            Ok(fuse_late(&failed, &r, rig))
        }
        (Err(e), _) => Err(e),
    }
}

fn early(inputs: &FrameInputs, params: &SolverParams) -> Result<PoseEstimate, SolveError> {
    let rig = inputs.rig;
    let disparity = require_disparity(FusionStrategy::EarlyJointPnpPlusDepth, inputs)?;
    let joint = joint_stereo_pnp(inputs.correspondences, rig, params)?;
    let left = inputs.correspondences.view(View::Left);
    let right = inputs.correspondences.view(View::Right);
    let lifts = lift_correspondences(&left, disparity, rig)?;
    let depth_terms: Vec<DepthTerm> = lifts
        .iter()
        .filter(|l| joint.inliers[l.index])
        .filter(|l| (joint.pose.transform_point(&l.object) - l.camera_point).norm() < params.inlier_threshold_mm)
        .map(|l| DepthTerm {
            object: l.object,
            camera_point: l.camera_point,
            weight: l.weight,
        })
        .collect();
    if depth_terms.is_empty() {
        let mut out = joint.with_strategy(FusionStrategy::EarlyJointPnpPlusDepth);
        out.fallback = true;
        return Ok(out);
    }
    let lcam = Camera {
        k: rig.left,
        from_left: Pose::identity(),
        view: View::Left,
    };
    let rcam = Camera {
        k: rig.right,
        from_left: rig.extrinsic_l2r,
        view: View::Right,
    };
    let mut observations = Vec::new();
    for (ci, (offset, list)) in [(0usize, &left), (left.len(), &right)].into_iter().enumerate() {
        for (i, c) in list.iter().enumerate() {
            if joint.inliers[offset + i] {
                observations.push(Observation {
                    pixel: c.pixel,
                    object: c.object,
                    weight: c.weight,
                    camera: ci,
                });
            }
        }
    }
    let problem = RefineProblem {
        cameras: vec![(lcam.k, lcam.from_left), (rcam.k, rcam.from_left)],
        observations,
        depth_terms: depth_terms.clone(),
        depth_weight: params.depth_weight,
    };
    let report = refine_problem(&joint.pose, &problem, params.refine_iterations)?;
    let pose = report.pose;
    let stats = reprojection_stats(&pose, &[lcam, rcam], &[&left, &right], &joint.inliers);
    let residual = depth_terms
        .iter()
        .map(|d| (pose.transform_point(&d.object) - d.camera_point).norm())
        .sum::<f64>()
        / depth_terms.len() as f64;
    Ok(PoseEstimate {
        pose,
        reprojection_px_left: stats[0],
        reprojection_px_right: stats[1],
        residual_mm: Some(residual),
        strategy: FusionStrategy::EarlyJointPnpPlusDepth,
        converged: joint.converged && report.converged,
        ..joint
    })
}

/// Dispatches one frame to the solver behind `strategy`.
pub fn estimate(strategy: FusionStrategy, inputs: &FrameInputs, params: &SolverParams) -> Result<PoseEstimate, SolveError> {
    params.validate()?;
    match strategy {
        FusionStrategy::MonoLeft => {
            let left = CorrespondenceSet::from_entries(inputs.correspondences.view(View::Left))?;
            pnp_solve(&left, &inputs.rig.left, params)
        }
        FusionStrategy::LatePoseCombine => late(inputs, params),
        FusionStrategy::MidJointPnp => joint_stereo_pnp(inputs.correspondences, inputs.rig, params),
        FusionStrategy::Disparity3d3d => {
            let disparity = require_disparity(strategy, inputs)?;
            disparity_3d3d_solve(inputs.correspondences, disparity, inputs.rig, params)
        }
        FusionStrategy::EarlyJointPnpPlusDepth => early(inputs, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, rot_z, rotation_geodesic, CameraIntrinsics};
    use nalgebra::{Matrix3, Quaternion, Vector2};

    fn rig() -> StereoRig {
        StereoRig::rectified(CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap(), 50.0).unwrap()
    }

    fn estimate_with(pose: Pose) -> PoseEstimate {
        PoseEstimate {
            pose,
            inlier_count: 10,
            correspondence_count: 12,
            inlier_ratio: 10.0 / 12.0,
            reprojection_px_left: Some(0.5),
            reprojection_px_right: None,
            residual_mm: None,
            strategy: FusionStrategy::MonoLeft,
            converged: true,
            fallback: false,
            inliers: vec![true; 12],
        }
    }

    #[test]
    fn late_fusion_of_equal_poses() {
        let r = rig();
        let p = Pose::from_axis_angle(Vector3::new(0.2, -0.4, 0.9), Vector3::new(10.0, 0.0, 600.0));
        let fused = fuse_late(&estimate_with(p), &estimate_with(r.to_right(&p)), &r);
        assert!((fused.pose.rotation - p.rotation).norm() < 1e-12);
        assert!((fused.pose.translation - p.translation).norm() < 1e-9);
        assert_eq!(fused.inlier_count, 20);
        assert_eq!(fused.correspondence_count, 24);
    }

    #[test]
    fn late_fusion_symmetric_rotations_average_to_identity() {
        let r = rig();
        let t = Vector3::new(0.0, 0.0, 700.0);
        let a = Pose { rotation: rot_z(0.4), translation: t };
        let b = Pose { rotation: rot_z(-0.4), translation: t };
        let fused = fuse_late(&estimate_with(a), &estimate_with(r.to_right(&b)), &r);
        assert!((fused.pose.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!((fused.pose.translation - t).norm() < 1e-9);
    }

    #[test]
    fn quaternion_sign_alignment() {
        let a = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.3);
        let b = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.5);
        let neg_b = UnitQuaternion::new_unchecked(-b.into_inner());
        let m1 = chordal_mean(&a, &b);
        let m2 = chordal_mean(&a, &neg_b);
        assert!((m1.to_rotation_matrix().into_inner() - m2.to_rotation_matrix().into_inner()).norm() < 1e-15);
        let _ = Quaternion::<f64>::identity();
    }

    #[test]
    fn late_fusion_falls_back() {
        let r = rig();
        let p = Pose::from_axis_angle(Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.0, 600.0));
        let mut bad = estimate_with(Pose::identity());
        bad.converged = false;
        let out = fuse_late(&estimate_with(p), &bad, &r);
        assert!(out.fallback);
        assert_eq!(out.pose, p);
        let out = fuse_late(&bad, &estimate_with(r.to_right(&p)), &r);
        assert!(out.fallback);
        assert!((out.pose.translation - p.translation).norm() < 1e-9);
    }

    fn stereo_fixture(pose: &Pose, n: usize) -> (CorrespondenceSet, DisparityMap) {
        let r = rig();
        let mut set = CorrespondenceSet::new();
        let mut disp = DisparityMap::invalid(640, 480);
        let pr = r.to_right(pose);
        for i in 0..n {
            // integer pixels on a grid, depth from a tilted plane through the object
            let (u, v) = (290 + (i % 8) as i64 * 8, 210 + (i / 8) as i64 * 8);
            let z = pose.translation.z + 0.1 * (u as f64 - 320.0) - 0.05 * (v as f64 - 240.0);
            let cam = backproject(&Vector2::new(u as f64, v as f64), z, &r.left).unwrap();
            let obj = pose.inverse().transform_point(&cam);
            set.push(Correspondence::new(Vector2::new(u as f64, v as f64), obj, View::Left)).unwrap();
            set.push(Correspondence::new(project(&pr.transform_point(&obj), &r.right).unwrap(), obj, View::Right)).unwrap();
            let idx = v as usize * 640 + u as usize;
            disp.values[idx] = 600.0 * 50.0 / z;
            disp.valid[idx] = true;
            disp.confidence[idx] = 1.0;
        }
        (set, disp)
    }

    #[test]
    fn every_strategy_recovers_noiseless_pose() {
        let r = rig();
        let pose = Pose::from_axis_angle(Vector3::new(0.5, -0.2, 0.3), Vector3::new(5.0, -8.0, 650.0));
        let (set, disp) = stereo_fixture(&pose, 48);
        let inputs = FrameInputs {
            correspondences: &set,
            rig: &r,
            disparity: Some(&disp),
        };
        for s in FusionStrategy::ALL {
            let est = estimate(s, &inputs, &SolverParams::default()).unwrap();
            assert_eq!(est.strategy, s);
            assert!(rotation_geodesic(&est.pose.rotation, &pose.rotation).unwrap() < 1e-6, "{s}");
            assert!((est.pose.translation - pose.translation).norm() < 1e-3, "{s}");
        }
    }

    #[test]
    fn disparity_strategies_need_a_map() {
        let r = rig();
        let pose = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, 600.0));
        let (set, _) = stereo_fixture(&pose, 16);
        let inputs = FrameInputs {
            correspondences: &set,
            rig: &r,
            disparity: None,
        };
        for s in [FusionStrategy::Disparity3d3d, FusionStrategy::EarlyJointPnpPlusDepth] {
            assert!(matches!(estimate(s, &inputs, &SolverParams::default()), Err(SolveError::Configuration(_))));
        }
    }

    #[test]
    fn invalid_disparity_everywhere_is_insufficient() {
        let r = rig();
        let pose = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, 600.0));
        let (set, _) = stereo_fixture(&pose, 16);
        let empty = DisparityMap::invalid(640, 480);
        assert!(matches!(
            disparity_3d3d_solve(&set, &empty, &r, &SolverParams::default()),
            Err(SolveError::InsufficientData { .. })
        ));
    }
}
