//! ADD / ADD-S pose errors, per-object recall tables and strategy comparison
//! tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::rasterizer::{farthest_point_sampling, max_pairwise_distance, TriMesh};

/// Model points kept for metric evaluation.
pub const MAX_MODEL_POINTS: usize = 1024;
/// ADD(-S) threshold as a fraction of the object diameter.
pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty model point set")]
    EmptyModel,
    #[error("no metadata for obj_id {0}")]
    UnknownObject(u32),
    #[error("invalid evaluation input: {0}")]
    InvalidInput(String),
}

/// Exact nearest-neighbour index over a static 3D point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    // implicit balanced tree: node = median of its slice, split axis by depth
    order: Vec<usize>,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of and squared distance to the closest point. Ties go to the
    /// first one found.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(&self.order, 0, q, &mut best);
        Some(best)
    }

    fn search(&self, slice: &[usize], depth: usize, q: &Vector3<f64>, best: &mut (usize, f64)) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let idx = slice[mid];
        let p = &self.points[idx];
        let d2 = (p - q).norm_squared();
        if d2 < best.1 {
            *best = (idx, d2);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, best);
        if diff * diff < best.1 {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(points: &[Vector3<f64>], slice: &mut [usize], depth: usize) {
    if slice.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (lo, hi) = slice.split_at_mut(mid);
    build(points, lo, depth + 1);
    build(points, &mut hi[1..], depth + 1);
}

/// Mean distance between corresponding model points under both poses.
pub fn add_error(pose_gt: &Pose, pose_est: &Pose, model_points: &[Vector3<f64>]) -> Result<f64, EvalError> {
    if model_points.is_empty() {
        return Err(EvalError::EmptyModel);
    }
    let sum: f64 = model_points
        .iter()
        .map(|x| (pose_est.transform_point(x) - pose_gt.transform_point(x)).norm())
        .sum();
    Ok(sum / model_points.len() as f64)
}

/// Mean distance from each ground-truth placed point to the closest
/// estimate-placed point.
pub fn adds_error(pose_gt: &Pose, pose_est: &Pose, model_points: &[Vector3<f64>]) -> Result<f64, EvalError> {
    if model_points.is_empty() {
        return Err(EvalError::EmptyModel);
    }
    let est: Vec<_> = model_points.iter().map(|x| pose_est.transform_point(x)).collect();
    let tree = KdTree::new(&est);
    let sum: f64 = model_points
        .iter()
        .map(|x| tree.nearest(&pose_gt.transform_point(x)).map_or(0.0, |(_, d2)| d2.sqrt()))
        .sum();
    Ok(sum / model_points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMeta {
    pub obj_id: u32,
    pub model_points: Vec<Vector3<f64>>,
    pub diameter: f64,
    pub symmetric: bool,
}

impl ObjectMeta {
    /// Up to [`MAX_MODEL_POINTS`] vertices chosen by farthest-point sampling;
    /// the diameter is taken over all vertices.
    pub fn from_mesh(obj_id: u32, mesh: &TriMesh, symmetric: bool) -> Self {
        let diameter = max_pairwise_distance(&mesh.vertices);
        let model_points = if mesh.vertices.len() <= MAX_MODEL_POINTS {
            mesh.vertices.clone()
        } else {
            farthest_point_sampling(&mesh.vertices, MAX_MODEL_POINTS, 0)
                .into_iter()
                .map(|i| mesh.vertices[i])
                .collect()
        };
        Self {
            obj_id,
            model_points,
            diameter,
            symmetric,
        }
    }

    /// ADD-S for symmetric objects, ADD otherwise.
    pub fn pose_error(&self, pose_gt: &Pose, pose_est: &Pose) -> Result<f64, EvalError> {
        if self.symmetric {
            adds_error(pose_gt, pose_est, &self.model_points)
        } else {
            add_error(pose_gt, pose_est, &self.model_points)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecall {
    pub obj_id: u32,
    pub symmetric: bool,
    pub count: usize,
    pub hits: usize,
    /// Percent.
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub tau: f64,
    pub objects: Vec<ObjectRecall>,
    /// Unweighted mean of the per-object recalls.
    pub overall: f64,
    pub total: usize,
}

/// Per-object recall of errors below `tau · diameter` (strict).
pub fn recall_table(
    results: &[(u32, f64)],
    meta: &BTreeMap<u32, ObjectMeta>,
    tau: f64,
    strategy: &str,
) -> Result<EvalReport, EvalError> {
    if !(tau > 0.0) {
        return Err(EvalError::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let mut per: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for &(obj_id, err) in results {
        let m = meta.get(&obj_id).ok_or(EvalError::UnknownObject(obj_id))?;
        if err.is_nan() {
            return Err(EvalError::InvalidInput(format!("NaN error for obj_id {obj_id}")));
        }
        let e = per.entry(obj_id).or_default();
        e.0 += 1;
        if err < tau * m.diameter {
            e.1 += 1;
        }
    }
    let objects: Vec<ObjectRecall> = per
        .into_iter()
        .map(|(obj_id, (count, hits))| ObjectRecall {
            obj_id,
            symmetric: meta[&obj_id].symmetric,
            count,
            hits,
            recall: 100.0 * hits as f64 / count as f64,
        })
        .collect();
    let overall = if objects.is_empty() {
        0.0
    } else {
        objects.iter().map(|o| o.recall).sum::<f64>() / objects.len() as f64
    };
    Ok(EvalReport {
        strategy: strategy.to_string(),
        tau,
        objects,
        overall,
        total: results.len(),
    })
}

fn object_rows(reports: &[EvalReport]) -> Vec<(u32, bool)> {
    let mut ids: BTreeMap<u32, bool> = BTreeMap::new();
    for r in reports {
        for o in &r.objects {
            ids.insert(o.obj_id, o.symmetric);
        }
    }
    ids.into_iter().collect()
}

fn cell(report: &EvalReport, obj_id: u32) -> Option<f64> {
    report.objects.iter().find(|o| o.obj_id == obj_id).map(|o| o.recall)
}

/// One row per object, one column per strategy, `mean` footer.
pub fn comparison_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("# ADD(-S) recall %, overall = unweighted mean over objects\nobj_id,symmetric");
    for r in reports {
        out.push(',');
        out.push_str(&r.strategy);
    }
    out.push('\n');
    for (id, sym) in object_rows(reports) {
        let _ = write!(out, "{id},{sym}");
        for r in reports {
            match cell(r, id) {
                Some(v) => {
                    let _ = write!(out, ",{v:.2}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out.push_str("mean,");
    for r in reports {
        let _ = write!(out, ",{:.2}", r.overall);
    }
    out.push('\n');
    out
}

/// Aligned plain-text variant of [`comparison_csv`]. Symmetric objects are
/// marked with `*`.
pub fn comparison_text(reports: &[EvalReport]) -> String {
    let tau = reports.first().map_or(DEFAULT_TAU, |r| r.tau);
    let mut header = vec!["object".to_string()];
    header.extend(reports.iter().map(|r| r.strategy.clone()));
    let mut rows = vec![header];
    for (id, sym) in object_rows(reports) {
        let mut row = vec![format!("{id}{}", if sym { "*" } else { "" })];
        row.extend(reports.iter().map(|r| cell(r, id).map_or("-".into(), |v| format!("{v:.1}"))));
        rows.push(row);
    }
    let mut footer = vec!["mean".to_string()];
    footer.extend(reports.iter().map(|r| format!("{:.1}", r.overall)));
    rows.push(footer);

    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = format!("ADD(-S) < {tau}d recall [%]; * = symmetric (ADD-S); mean = unweighted over objects\n");
    let rule: String = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
    for (i, row) in rows.iter().enumerate() {
        if i == rows.len() - 1 {
            out.push_str(&rule);
            out.push('\n');
        }
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&rule);
            out.push('\n');
        }
    }
    out
}
