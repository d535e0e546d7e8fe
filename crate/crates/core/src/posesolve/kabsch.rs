use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FusionStrategy, PoseEstimate, SolveError, SolverParams};
use crate::geometry::Pose;

/// Closed-form weighted least-squares rigid transform with `dst ≈ R·src + t`.
pub fn kabsch_fit(src: &[Vector3<f64>], dst: &[Vector3<f64>], weights: Option<&[f64]>) -> Result<Pose, SolveError> {
    if src.len() != dst.len() {
        return Err(SolveError::InvalidInput(format!("{} source vs {} target points", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(SolveError::DegenerateConfiguration(format!("{} pairs, need 3", src.len())));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..src.len()).map(w).sum();
    if !(total > 0.0) {
        return Err(SolveError::DegenerateConfiguration("zero total weight".into()));
    }
    let cs = (0..src.len()).fold(Vector3::zeros(), |acc, i| acc + src[i] * w(i)) / total;
    let cd = (0..dst.len()).fold(Vector3::zeros(), |acc, i| acc + dst[i] * w(i)) / total;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for i in 0..src.len() {
        let a = src[i] - cs;
        let b = dst[i] - cd;
        cov += b * a.transpose() * w(i);
        scatter += a * a.transpose() * w(i);
    }
    let sv = scatter.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(sv[0] > 0.0) || sv[1] <= 1e-10 * sv[0] {
        return Err(SolveError::DegenerateConfiguration("points are collinear or coincident".into()));
    }
    let svd = cov.svd(true, true);
    let u = svd.u.ok_or_else(|| SolveError::Numeric("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| SolveError::Numeric("svd failed".into()))?;
    let d = (u * v_t).determinant().signum();
    let rotation = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    let translation = cd - rotation * cs;
    Ok(Pose { rotation, translation })
}

fn residuals(pose: &Pose, pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Vec<f64> {
    pairs.iter().map(|(o, c)| (pose.transform_point(o) - c).norm()).collect()
}

fn estimate_from(pose: Pose, pairs: &[(Vector3<f64>, Vector3<f64>)], inliers: Vec<bool>, converged: bool) -> PoseEstimate {
    let res = residuals(&pose, pairs);
    let count = inliers.iter().filter(|&&b| b).count();
    let mean = if count > 0 {
        res.iter().zip(&inliers).filter(|(_, &b)| b).map(|(r, _)| r).sum::<f64>() / count as f64
    } else {
        0.0
    };
    PoseEstimate {
        pose,
        inlier_count: count,
        correspondence_count: pairs.len(),
        inlier_ratio: if pairs.is_empty() { 0.0 } else { count as f64 / pairs.len() as f64 },
        reprojection_px_left: None,
        reprojection_px_right: None,
        residual_mm: Some(mean),
        strategy: FusionStrategy::Disparity3d3d,
        converged,
        fallback: false,
        inliers,
    }
}

/// Closed-form alignment of `(object point, camera point)` pairs. Inliers
/// are pairs within `inlier_threshold_mm` of the fitted transform.
pub fn kabsch_align(pairs: &[(Vector3<f64>, Vector3<f64>)], params: &SolverParams) -> Result<PoseEstimate, SolveError> {
    if pairs.len() < 3 {
        return Err(SolveError::DegenerateConfiguration(format!("{} pairs, need 3", pairs.len())));
    }
    let (src, dst): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
    let pose = kabsch_fit(&src, &dst, None)?;
    let inliers = residuals(&pose, pairs).iter().map(|&r| r < params.inlier_threshold_mm).collect();
    Ok(estimate_from(pose, pairs, inliers, true))
}

/// RANSAC over 3-point samples followed by refits on the inlier set.
pub fn kabsch_ransac(
    pairs: &[(Vector3<f64>, Vector3<f64>)],
    weights: Option<&[f64]>,
    params: &SolverParams,
) -> Result<PoseEstimate, SolveError> {
    params.validate()?;
    let n = pairs.len();
    if n < 3 {
        return Err(SolveError::InsufficientData { needed: 3, got: n });
    }
    let thr = params.inlier_threshold_mm;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, f64, Pose)> = None;
    let mut needed = params.max_iterations;
    let mut it = 0;
    while it < needed.min(params.max_iterations) {
        it += 1;
        let idx = sample(&mut rng, n, 3);
        let src: Vec<_> = idx.iter().map(|i| pairs[i].0).collect();
        let dst: Vec<_> = idx.iter().map(|i| pairs[i].1).collect();
        let Ok(pose) = kabsch_fit(&src, &dst, None) else {
            continue;
        };
        let (mut count, mut score) = (0usize, 0.0);
        for r in residuals(&pose, pairs) {
            if r < thr {
                count += 1;
                score += r * r;
            }
        }
        let better = match &best {
            None => true,
            Some((c, s, _)) => count > *c || (count == *c && score < *s),
        };
        if better {
            best = Some((count, score, pose));
            let w = count as f64 / n as f64;
            needed = adaptive_iterations(w, 3, params.ransac_confidence, params.max_iterations);
        }
    }
    let Some((_, _, mut pose)) = best else {
        return Err(SolveError::DegenerateConfiguration("no non-degenerate 3-point sample".into()));
    };
    let mut inliers: Vec<bool> = residuals(&pose, pairs).iter().map(|&r| r < thr).collect();
    for _ in 0..3 {
        let idx: Vec<usize> = (0..n).filter(|&i| inliers[i]).collect();
        if idx.len() < 3 {
            break;
        }
        let src: Vec<_> = idx.iter().map(|&i| pairs[i].0).collect();
        let dst: Vec<_> = idx.iter().map(|&i| pairs[i].1).collect();
        let w: Option<Vec<f64>> = weights.map(|w| idx.iter().map(|&i| w[i]).collect());
        match kabsch_fit(&src, &dst, w.as_deref()) {
            Ok(p) => pose = p,
            Err(_) => break,
        }
        let next: Vec<bool> = residuals(&pose, pairs).iter().map(|&r| r < thr).collect();
        if next == inliers {
            break;
        }
        inliers = next;
    }
    let converged = inliers.iter().filter(|&&b| b).count() >= 3;
    Ok(estimate_from(pose, pairs, inliers, converged))
}

/// Iterations needed to draw an all-inlier sample of `sample_size` with the
/// given confidence at inlier ratio `w`.
pub(crate) fn adaptive_iterations(w: f64, sample_size: i32, confidence: f64, cap: usize) -> usize {
    if w >= 1.0 {
        return 1;
    }
    let p = w.powi(sample_size);
    if p <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p).ln();
    if n.is_finite() {
        (n.ceil().max(1.0) as usize).min(cap)
    } else {
        cap
    }
}
