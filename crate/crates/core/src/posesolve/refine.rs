//! Damped Gauss-Newton refinement of an object→left-camera pose.
//!
//! Increments `ξ = (ω, v)` act on the left: `R ← Exp(ω)·R`,
//! `t ← Exp(ω)·t + v`, so a camera-frame point moves by `ω × X + v`.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix6, Rotation3, Vector2, Vector3, Vector6};

use super::SolveError;
use crate::geometry::{skew, CameraIntrinsics, Pose};

/// One pixel observation of an object point in some camera of the rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pixel: Vector2<f64>,
    pub object: Vector3<f64>,
    pub weight: f64,
    /// Index into [`RefineProblem::cameras`].
    pub camera: usize,
}

/// Measured camera-frame (left) position of an object point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthTerm {
    pub object: Vector3<f64>,
    pub camera_point: Vector3<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineProblem {
    /// Intrinsics and left→camera extrinsic for each camera.
    pub cameras: Vec<(CameraIntrinsics, Pose)>,
    pub observations: Vec<Observation>,
    pub depth_terms: Vec<DepthTerm>,
    /// Residual pixels per millimeter of 3D point error.
    pub depth_weight: f64,
}

impl RefineProblem {
    pub fn residual_count(&self) -> usize {
        2 * self.observations.len() + 3 * self.depth_terms.len()
    }

    /// Stacked weighted residuals; `None` if a point falls behind a camera.
    pub fn residuals(&self, pose: &Pose) -> Option<DVector<f64>> {
        let mut r = DVector::zeros(self.residual_count());
        for (i, o) in self.observations.iter().enumerate() {
            let (k, ext) = &self.cameras[o.camera];
            let y = ext.transform_point(&pose.transform_point(&o.object));
            if !(y.z > 0.0) {
                return None;
            }
            let sw = o.weight.sqrt();
            r[2 * i] = sw * (k.fx * y.x / y.z + k.cx - o.pixel.x);
            r[2 * i + 1] = sw * (k.fy * y.y / y.z + k.cy - o.pixel.y);
        }
        let base = 2 * self.observations.len();
        for (i, d) in self.depth_terms.iter().enumerate() {
            let s = self.depth_weight * d.weight.sqrt();
            let e = (pose.transform_point(&d.object) - d.camera_point) * s;
            r[base + 3 * i] = e.x;
            r[base + 3 * i + 1] = e.y;
            r[base + 3 * i + 2] = e.z;
        }
        Some(r)
    }

    /// Analytic Jacobian of [`Self::residuals`] with respect to `ξ` at zero.
    pub fn jacobian(&self, pose: &Pose) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.residual_count(), 6);
        for (i, o) in self.observations.iter().enumerate() {
            let (k, ext) = &self.cameras[o.camera];
            let x = pose.transform_point(&o.object);
            let y = ext.transform_point(&x);
            let iz = 1.0 / y.z;
            let dproj = Matrix2x3::new(
                k.fx * iz, 0.0, -k.fx * y.x * iz * iz,
                0.0, k.fy * iz, -k.fy * y.y * iz * iz,
            );
            let sw = o.weight.sqrt();
            let dx_rot = -skew(&x);
            let jr = dproj * ext.rotation * dx_rot * sw;
            let jt = dproj * ext.rotation * sw;
            j.view_mut((2 * i, 0), (2, 3)).copy_from(&jr);
            j.view_mut((2 * i, 3), (2, 3)).copy_from(&jt);
        }
        let base = 2 * self.observations.len();
        for (i, d) in self.depth_terms.iter().enumerate() {
            let s = self.depth_weight * d.weight.sqrt();
            let x = pose.transform_point(&d.object);
            j.view_mut((base + 3 * i, 0), (3, 3)).copy_from(&(-skew(&x) * s));
            j.view_mut((base + 3 * i, 3), (3, 3)).copy_from(&(Matrix3::identity() * s));
        }
        j
    }
}

/// Applies a left increment `ξ = (ω, v)` to a pose.
pub fn apply_increment(pose: &Pose, xi: &Vector6<f64>) -> Pose {
    let w = Vector3::new(xi[0], xi[1], xi[2]);
    let v = Vector3::new(xi[3], xi[4], xi[5]);
    let dr = Rotation3::new(w).into_inner();
    Pose {
        rotation: dr * pose.rotation,
        translation: dr * pose.translation + v,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    pub pose: Pose,
    /// Sum of squared residuals at the start and after each accepted step.
    pub costs: Vec<f64>,
    pub accepted_steps: usize,
    pub converged: bool,
}

impl RefineReport {
    pub fn final_cost(&self) -> f64 {
        *self.costs.last().unwrap_or(&0.0)
    }
}

const MAX_DAMPING_TRIES: usize = 40;

pub fn refine_problem(pose0: &Pose, problem: &RefineProblem, iterations: usize) -> Result<RefineReport, SolveError> {
    let r0 = problem
        .residuals(pose0)
        .ok_or_else(|| SolveError::Numeric("initial pose puts points behind a camera".into()))?;
    if !r0.iter().all(|v| v.is_finite()) {
        return Err(SolveError::Numeric("non-finite residuals".into()));
    }
    let mut pose = *pose0;
    let mut cost = r0.norm_squared();
    let mut r = r0;
    let mut costs = vec![cost];
    let mut mu = 1e-4;
    let mut accepted = 0;
    let mut converged = problem.residual_count() == 0 || cost == 0.0;
    for _ in 0..iterations {
        if converged {
            break;
        }
        let j = problem.jacobian(&pose);
        let jt = j.transpose();
        let h: Matrix6<f64> = Matrix6::from_iterator((&jt * &j).iter().cloned());
        let g: Vector6<f64> = Vector6::from_iterator((&jt * &r).iter().cloned());
        if !h.iter().chain(g.iter()).all(|v| v.is_finite()) {
            return Err(SolveError::Numeric("non-finite jacobian".into()));
        }
        if g.amax() <= 1e-14 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut stepped = false;
        for _ in 0..MAX_DAMPING_TRIES {
            let mut damped = h;
            for d in 0..6 {
                damped[(d, d)] += mu * (h[(d, d)] + 1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 2.0;
                continue;
            };
            let delta = -chol.solve(&g);
            let candidate = apply_increment(&pose, &delta);
            match problem.residuals(&candidate) {
                Some(rc) if rc.iter().all(|v| v.is_finite()) && rc.norm_squared() <= cost => {
                    let new_cost = rc.norm_squared();
                    let small_step = delta.norm() <= 1e-12 * (1.0 + pose.translation.norm());
                    let small_gain = cost - new_cost <= 1e-15 * cost;
                    pose = candidate;
                    r = rc;
                    cost = new_cost;
                    costs.push(cost);
                    accepted += 1;
                    mu = (mu * 0.5).max(1e-12);
                    stepped = true;
                    if small_step || small_gain {
                        converged = true;
                    }
                    break;
                }
                _ => mu *= 2.0,
            }
        }
        if !stepped {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
    }
    Ok(RefineReport {
        pose: pose.orthonormalized(),
        costs,
        accepted_steps: accepted,
        converged,
    })
}

/// Refines `pose0` against reprojection residuals in one or both views.
/// `cameras[0]` must be the left camera with identity extrinsic.
pub fn refine_pose(pose0: &Pose, problem: &RefineProblem, iterations: usize) -> Result<Pose, SolveError> {
    Ok(refine_problem(pose0, problem, iterations)?.pose)
}

pub(crate) fn reprojection_error(k: &CameraIntrinsics, ext: &Pose, pose: &Pose, object: &Vector3<f64>, pixel: &Vector2<f64>) -> Option<f64> {
    let y = ext.transform_point(&pose.transform_point(object));
    if !(y.z > 0.0) {
        return None;
    }
    Some((Vector2::new(k.fx * y.x / y.z + k.cx, k.fy * y.y / y.z + k.cy) - pixel).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, rotation_geodesic, StereoRig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn problem(pose: &Pose, n: usize, stereo: bool, depth: bool, seed: u64) -> RefineProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rig = StereoRig::rectified(k(), 50.0).unwrap();
        let mut cameras = vec![(k(), Pose::identity())];
        if stereo {
            cameras.push((k(), rig.extrinsic_l2r));
        }
        let mut observations = Vec::new();
        let mut depth_terms = Vec::new();
        for _ in 0..n {
            let o = Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            for (ci, (kk, ext)) in cameras.iter().enumerate() {
                let px = project(&ext.transform_point(&pose.transform_point(&o)), kk).unwrap();
                observations.push(Observation { pixel: px, object: o, weight: rng.random_range(0.5..1.0), camera: ci });
            }
            if depth {
                depth_terms.push(DepthTerm { object: o, camera_point: pose.transform_point(&o), weight: 1.0 });
            }
        }
        RefineProblem { cameras, observations, depth_terms, depth_weight: 1.0 }
    }

    fn gt() -> Pose {
        Pose::from_axis_angle(Vector3::new(0.4, -0.3, 1.1), Vector3::new(20.0, -10.0, 650.0))
    }

    #[test]
    fn ground_truth_is_fixed_point() {
        let p = problem(&gt(), 20, true, true, 1);
        let rep = refine_problem(&gt(), &p, 20).unwrap();
        assert!((rep.pose.rotation - gt().rotation).norm() < 1e-9);
        assert!((rep.pose.translation - gt().translation).norm() < 1e-9);
    }

    #[test]
    fn converges_from_perturbation() {
        let truth = gt();
        let p = problem(&truth, 30, false, false, 2);
        let start = apply_increment(
            &truth,
            &Vector6::new(1f64.to_radians() / 3f64.sqrt(), 1f64.to_radians() / 3f64.sqrt(), -1f64.to_radians() / 3f64.sqrt(), 3.0, -4.0, 0.0),
        );
        let rep = refine_problem(&start, &p, 10).unwrap();
        assert!(rotation_geodesic(&rep.pose.rotation, &truth.rotation).unwrap() < 1e-6);
        assert!((rep.pose.translation - truth.translation).norm() < 1e-3);
        assert!(rep.costs.windows(2).all(|w| w[1] <= w[0]));
    }

    /// Central finite differences of the residual vector along each increment axis.
    fn numeric_jacobian(p: &RefineProblem, pose: &Pose, h: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(p.residual_count(), 6);
        for a in 0..6 {
            let mut e = Vector6::zeros();
            e[a] = h;
            let rp = p.residuals(&apply_increment(pose, &e)).unwrap();
            let rm = p.residuals(&apply_increment(pose, &(-e))).unwrap();
            j.set_column(a, &((rp - rm) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let truth = gt();
            let p = problem(&truth, 8, trial % 2 == 0, trial % 3 == 0, trial);
            let pose = apply_increment(
                &truth,
                &Vector6::from_fn(|i, _| if i < 3 { rng.random_range(-0.05..0.05) } else { rng.random_range(-10.0..10.0) }),
            );
            let a = p.jacobian(&pose);
            let n = numeric_jacobian(&p, &pose, 1e-6);
            let rel = (&a - &n).norm() / a.norm();
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn behind_camera_start_is_numeric_error() {
        let p = problem(&gt(), 5, false, false, 3);
        let bad = Pose::from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, -500.0));
        assert!(matches!(refine_problem(&bad, &p, 5), Err(SolveError::Numeric(_))));
    }
}
