//! Grunert-style P3P: the three distance constraints are reduced to a
//! quartic by the resultant of two quadratics, whose real roots give the
//! point depths along the bearing rays.

use nalgebra::{DMatrix, Vector3};

use super::kabsch::kabsch_fit;
use crate::geometry::Pose;

type Poly = Vec<f64>;

fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64], sign: f64) -> Poly {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + sign * b.get(i).copied().unwrap_or(0.0))
        .collect()
}

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_derivative(p: &[f64]) -> Poly {
    p.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect()
}

/// Real roots of a polynomial given by ascending coefficients, via the
/// companion matrix and a few Newton polishing steps.
pub fn solve_polynomial_real(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut p: Poly = coeffs.iter().map(|c| c / scale).collect();
    while p.len() > 1 && p.last().is_some_and(|c| c.abs() < 1e-12) {
        p.pop();
    }
    let n = p.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![-p[0] / p[1]];
    }
    let lead = p[n];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -p[i] / lead;
    }
    let dp = poly_derivative(&p);
    let mut roots = Vec::new();
    for z in comp.complex_eigenvalues().iter() {
        if z.im.abs() > 1e-4 * (1.0 + z.re.abs()) {
            continue;
        }
        let mut x = z.re;
        for _ in 0..4 {
            let d = poly_eval(&dp, x);
            if d.abs() < 1e-300 {
                break;
            }
            let step = poly_eval(&p, x) / d;
            x -= step;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        if x.is_finite() {
            roots.push(x);
        }
    }
    roots
}

/// Candidate object→camera poses from three object points and their unit
/// bearing vectors in the camera frame. Returns an empty list for
/// degenerate (coincident or collinear) inputs.
pub fn p3p(objects: &[Vector3<f64>; 3], bearings: &[Vector3<f64>; 3]) -> Vec<Pose> {
    let [p1, p2, p3] = objects;
    let b_len = (p1 - p3).norm();
    if !(b_len > 0.0) {
        return Vec::new();
    }
    // distances relative to |P1 − P3| for conditioning
    let a = (p2 - p3).norm() / b_len;
    let c = (p1 - p2).norm() / b_len;
    let cross = (p2 - p1).cross(&(p3 - p1)).norm() / (b_len * b_len);
    if a < 1e-9 || c < 1e-9 || cross < 1e-9 {
        return Vec::new();
    }
    let j: Vec<Vector3<f64>> = bearings.iter().map(|v| v.normalize()).collect();
    let cos_a = j[1].dot(&j[2]);
    let cos_b = j[0].dot(&j[2]);
    let cos_g = j[0].dot(&j[1]);
    let (a2, c2) = (a * a, c * c);

    // with u = s2/s1, v = s3/s1 (b normalized to 1):
    //   p(u) = u² − 2cosγ·u + 1 − c²(1 + v² − 2v·cosβ) = 0
    //   q(u) = u² − 2cosα·v·u + v² − a²(1 + v² − 2v·cosβ) = 0
    let p2: Poly = vec![1.0];
    let p1: Poly = vec![-2.0 * cos_g];
    let p0: Poly = vec![1.0 - c2, 2.0 * c2 * cos_b, -c2];
    let q2: Poly = vec![1.0];
    let q1: Poly = vec![0.0, -2.0 * cos_a];
    let q0: Poly = vec![-a2, 2.0 * a2 * cos_b, 1.0 - a2];

    // resultant of two quadratics in u
    let t1 = poly_add(&poly_mul(&p2, &q0), &poly_mul(&p0, &q2), -1.0);
    let t2 = poly_add(&poly_mul(&p2, &q1), &poly_mul(&p1, &q2), -1.0);
    let t3 = poly_add(&poly_mul(&p1, &q0), &poly_mul(&p0, &q1), -1.0);
    let res = poly_add(&poly_mul(&t1, &t1), &poly_mul(&t2, &t3), -1.0);

    let mut poses = Vec::new();
    for v in solve_polynomial_real(&res) {
        if !(v > 0.0) {
            continue;
        }
        let p0v = poly_eval(&p0, v);
        let q0v = poly_eval(&q0, v);
        let p1v = p1[0];
        let q1v = poly_eval(&q1, v);
        let mut us = Vec::new();
        let denom = p1v - q1v;
        if denom.abs() > 1e-10 {
            us.push((q0v - p0v) / denom);
        } else {
            // both quadratics share the linear term: take roots of p
            let disc = p1v * p1v - 4.0 * p0v;
            if disc >= 0.0 {
                us.push((-p1v + disc.sqrt()) / 2.0);
                us.push((-p1v - disc.sqrt()) / 2.0);
            }
        }
        for u in us {
            if !(u > 0.0) {
                continue;
            }
            let pu = u * u + p1v * u + p0v;
            let qu = u * u + q1v * u + q0v;
            if pu.abs() > 1e-6 || qu.abs() > 1e-6 {
                continue;
            }
            let denom_s = 1.0 + u * u - 2.0 * u * cos_g;
            if !(denom_s > 0.0) {
                continue;
            }
            let s1 = c * b_len / denom_s.sqrt();
            let cam = [j[0] * s1, j[1] * (u * s1), j[2] * (v * s1)];
            if let Ok(pose) = kabsch_fit(objects, &cam, None) {
                if pose.is_finite() {
                    poses.push(pose);
                }
            }
        }
    }
    poses
}
