use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kabsch::adaptive_iterations;
use super::p3p::p3p;
use super::refine::{refine_problem, reprojection_error, Observation, RefineProblem};
use super::{Correspondence, CorrespondenceSet, FusionStrategy, PoseEstimate, SolveError, SolverParams, View};
use crate::geometry::{CameraIntrinsics, Pose, StereoRig};

/// A camera of the rig: intrinsics and the left→camera extrinsic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub k: CameraIntrinsics,
    pub from_left: Pose,
    pub view: View,
}

struct ViewData<'a> {
    camera: Camera,
    corrs: &'a [Correspondence],
    bearings: Vec<Vector3<f64>>,
}

fn check_pixels(camera: &Camera, corrs: &[Correspondence]) -> Result<(), SolveError> {
    if let Some(c) = corrs.iter().find(|c| !camera.k.contains(c.pixel.x, c.pixel.y)) {
        return Err(SolveError::InvalidInput(format!(
            "pixel ({}, {}) outside the {:?} image",
            c.pixel.x, c.pixel.y, camera.view
        )));
    }
    Ok(())
}

/// Inlier flags over the concatenation of all views.
fn score(pose: &Pose, views: &[ViewData], thr: f64) -> (usize, f64, Vec<bool>) {
    let mut count = 0;
    let mut sse = 0.0;
    let mut flags = Vec::new();
    for v in views {
        for c in v.corrs {
            let e = reprojection_error(&v.camera.k, &v.camera.from_left, pose, &c.object, &c.pixel);
            let inlier = matches!(e, Some(e) if e < thr);
            if inlier {
                count += 1;
                sse += e.unwrap().powi(2);
            }
            flags.push(inlier);
        }
    }
    (count, sse, flags)
}

/// Mean reprojection error over flagged correspondences of each view.
pub fn reprojection_stats(pose: &Pose, cameras: &[Camera], corrs: &[&[Correspondence]], inliers: &[bool]) -> Vec<Option<f64>> {
    let mut offset = 0;
    cameras
        .iter()
        .zip(corrs)
        .map(|(cam, cs)| {
            let (mut sum, mut n) = (0.0, 0usize);
            for (i, c) in cs.iter().enumerate() {
                if inliers[offset + i] {
                    if let Some(e) = reprojection_error(&cam.k, &cam.from_left, pose, &c.object, &c.pixel) {
                        sum += e;
                        n += 1;
                    }
                }
            }
            offset += cs.len();
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

fn build_problem(views: &[ViewData], inliers: &[bool]) -> RefineProblem {
    let mut observations = Vec::new();
    let mut offset = 0;
    for (ci, v) in views.iter().enumerate() {
        for (i, c) in v.corrs.iter().enumerate() {
            if inliers[offset + i] {
                observations.push(Observation {
                    pixel: c.pixel,
                    object: c.object,
                    weight: c.weight,
                    camera: ci,
                });
            }
        }
        offset += v.corrs.len();
    }
    RefineProblem {
        cameras: views.iter().map(|v| (v.camera.k, v.camera.from_left)).collect(),
        observations,
        depth_terms: Vec::new(),
        depth_weight: 0.0,
    }
}

/// RANSAC over P3P hypotheses from any single camera, scored on the union of
/// all views, then damped least-squares refinement on the inliers.
pub(crate) fn multiview_pnp(
    cameras: &[Camera],
    corrs: &[&[Correspondence]],
    params: &SolverParams,
    strategy: FusionStrategy,
) -> Result<PoseEstimate, SolveError> {
    params.validate()?;
    let total: usize = corrs.iter().map(|c| c.len()).sum();
    if total < 4 {
        return Err(SolveError::InsufficientData { needed: 4, got: total });
    }
    let mut views = Vec::new();
    for (cam, cs) in cameras.iter().zip(corrs) {
        check_pixels(cam, cs)?;
        views.push(ViewData {
            camera: *cam,
            corrs: cs,
            bearings: cs.iter().map(|c| cam.k.ray(c.pixel.x, c.pixel.y).normalize()).collect(),
        });
    }
    let eligible: Vec<usize> = (0..views.len()).filter(|&v| views[v].corrs.len() >= 4).collect();
    let eligible_total: usize = eligible.iter().map(|&v| views[v].corrs.len()).sum();
    if eligible_total == 0 {
        return Err(SolveError::InsufficientData { needed: 4, got: 0 });
    }

    let thr = params.ransac_threshold_px;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, f64, Pose)> = None;
    let mut needed = params.max_iterations;
    let mut it = 0;
    while it < needed {
        it += 1;
        // camera chosen with probability proportional to its correspondence count
        let mut pick = rng.random_range(0..eligible_total);
        let mut vi = eligible[0];
        for &v in &eligible {
            if pick < views[v].corrs.len() {
                vi = v;
                break;
            }
            pick -= views[v].corrs.len();
        }
        let view = &views[vi];
        let idx = sample(&mut rng, view.corrs.len(), 4).into_vec();
        let objects = [view.corrs[idx[0]].object, view.corrs[idx[1]].object, view.corrs[idx[2]].object];
        let bearings = [view.bearings[idx[0]], view.bearings[idx[1]], view.bearings[idx[2]]];
        let check = &view.corrs[idx[3]];
        let to_left = view.camera.from_left.inverse();
        let mut hypothesis: Option<(f64, Pose)> = None;
        for cand in p3p(&objects, &bearings) {
            let pose = to_left.compose(&cand);
            if let Some(e) = reprojection_error(&view.camera.k, &view.camera.from_left, &pose, &check.object, &check.pixel) {
                if hypothesis.as_ref().is_none_or(|(b, _)| e < *b) {
                    hypothesis = Some((e, pose));
                }
            }
        }
        let Some((_, pose)) = hypothesis else {
            continue;
        };
        let (count, sse, _) = score(&pose, &views, thr);
        let better = match &best {
            None => true,
            Some((c, s, _)) => count > *c || (count == *c && sse < *s),
        };
        if better {
            best = Some((count, sse, pose));
            let w = count as f64 / total as f64;
            needed = adaptive_iterations(w, 4, params.ransac_confidence, params.max_iterations);
        }
    }
    let Some((_, _, mut pose)) = best else {
        return Err(SolveError::DegenerateConfiguration(
            "every minimal sample was degenerate (collinear or coincident points)".into(),
        ));
    };

    let (_, _, mut inliers) = score(&pose, &views, thr);
    let mut converged = false;
    for _ in 0..2 {
        if inliers.iter().filter(|&&b| b).count() < 4 {
            break;
        }
        let problem = build_problem(&views, &inliers);
        let report = refine_problem(&pose, &problem, params.refine_iterations)?;
        pose = report.pose;
        converged = report.converged;
        let (_, _, next) = score(&pose, &views, thr);
        if next == inliers {
            break;
        }
        inliers = next;
    }
    let inlier_count = inliers.iter().filter(|&&b| b).count();
    let per_view = reprojection_stats(&pose, cameras, corrs, &inliers);
    let mut left = None;
    let mut right = None;
    for (cam, stat) in cameras.iter().zip(per_view) {
        match cam.view {
            View::Left => left = stat,
            View::Right => right = stat,
        }
    }
    Ok(PoseEstimate {
        pose,
        inlier_count,
        correspondence_count: total,
        inlier_ratio: inlier_count as f64 / total as f64,
        reprojection_px_left: left,
        reprojection_px_right: right,
        residual_mm: None,
        strategy,
        converged: converged && inlier_count >= 4,
        fallback: false,
        inliers,
    })
}

/// Single-view RANSAC PnP. All entries are treated as observations in the
/// camera `k`, whatever their view tag.
pub fn pnp_solve(corrs: &CorrespondenceSet, k: &CameraIntrinsics, params: &SolverParams) -> Result<PoseEstimate, SolveError> {
    let cam = Camera {
        k: *k,
        from_left: Pose::identity(),
        view: View::Left,
    };
    multiview_pnp(&[cam], &[corrs.entries()], params, FusionStrategy::MonoLeft)
}

/// One pose in the left camera frame fitted to the correspondences of both
/// cameras. With no right-view entries this is exactly [`pnp_solve`].
pub fn joint_stereo_pnp(corrs: &CorrespondenceSet, rig: &StereoRig, params: &SolverParams) -> Result<PoseEstimate, SolveError> {
    let left = corrs.view(View::Left);
    let right = corrs.view(View::Right);
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
    let est = if right.is_empty() {
        multiview_pnp(&[lcam], &[&left], params, FusionStrategy::MidJointPnp)?
    } else {
        multiview_pnp(&[lcam, rcam], &[&left, &right], params, FusionStrategy::MidJointPnp)?
    };
    Ok(est)
}
