use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::estimate::EstimatesFile;
use super::noise::NoiseConfig;
use super::CliError;
use crate::bopstore::{list_scenes, read_models_info, read_scene};
use crate::evalkit::{recall_table, EvalReport, ObjectMeta};
use crate::geometry::Pose;
use crate::posesolve::FusionStrategy;
use crate::scenegen::ModelLibrary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub report: EvalReport,
    /// Mean ADD(-S) over successful estimates (mm).
    pub mean_error_mm: Option<f64>,
    /// Median |t_est.z − t_gt.z| over successful estimates (mm).
    pub median_abs_dz_mm: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub noise: NoiseConfig,
    pub tau: f64,
    /// Ground-truth labels with no estimate; counted as misses.
    pub missing: usize,
    pub strategies: BTreeMap<FusionStrategy, StrategySummary>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Scores estimates against the dataset's ground truth. Records that refer
/// to labels absent from the dataset are a validation error.
pub fn evaluate(root: &Path, estimates: &EstimatesFile, tau: f64) -> Result<Evaluation, CliError> {
    let v = |e: String| CliError::Validation(e);
    let info = read_models_info(root).map_err(|e| v(e.to_string()))?;
    let library = ModelLibrary::from_info(&info, 1).map_err(|e| CliError::Runtime(e.to_string()))?;
    let meta: BTreeMap<u32, ObjectMeta> = library
        .meshes
        .iter()
        .map(|(&id, mesh)| (id, ObjectMeta::from_mesh(id, mesh, info[&id].symmetric)))
        .collect();

    // (scene, frame, inst) -> (obj_id, gt pose)
    let mut gt: BTreeMap<(u32, u32, u32), (u32, Pose)> = BTreeMap::new();
    for sid in list_scenes(root).map_err(|e| v(e.to_string()))? {
        let scene = read_scene(root, sid).map_err(|e| v(e.to_string()))?;
        for f in &scene.frames {
            for a in &f.annotations {
                gt.insert((sid, f.frame_id, a.inst_id), (a.obj_id, a.pose));
            }
        }
    }

    let mut per: BTreeMap<FusionStrategy, (Vec<(u32, f64)>, Vec<f64>, Vec<f64>, usize)> =
        estimates.strategies.iter().map(|&s| (s, Default::default())).collect();
    let mut seen: BTreeMap<FusionStrategy, std::collections::BTreeSet<(u32, u32, u32)>> = BTreeMap::new();
    for r in &estimates.records {
        let key = (r.scene_id, r.frame_id, r.inst_id);
        let Some(&(obj_id, pose_gt)) = gt.get(&key) else {
            return Err(v(format!(
                "estimate for scene {}, frame {}, inst {} has no ground-truth label in {}",
                r.scene_id,
                r.frame_id,
                r.inst_id,
                root.display()
            )));
        };
        if obj_id != r.obj_id {
            return Err(v(format!(
                "scene {}, frame {}, inst {}: obj_id {} in estimates, {} in ground truth",
                r.scene_id, r.frame_id, r.inst_id, r.obj_id, obj_id
            )));
        }
        if !seen.entry(r.strategy).or_default().insert(key) {
            return Err(v(format!("duplicate {} estimate for scene {}, frame {}, inst {}", r.strategy, key.0, key.1, key.2)));
        }
        let entry = per
            .get_mut(&r.strategy)
            .ok_or_else(|| v(format!("record strategy {} not listed in the estimates header", r.strategy)))?;
        match r.pose() {
            Some(est) => {
                let err = meta[&obj_id].pose_error(&pose_gt, &est).map_err(|e| CliError::Runtime(e.to_string()))?;
                entry.0.push((obj_id, err));
                entry.1.push(err);
                entry.2.push((est.translation.z - pose_gt.translation.z).abs());
            }
            None => {
                entry.0.push((obj_id, f64::INFINITY));
                entry.3 += 1;
            }
        }
    }
    let mut missing = 0;
    for (s, (results, ..)) in per.iter_mut() {
        let done = seen.get(s);
        for (key, &(obj_id, _)) in &gt {
            if done.is_none_or(|d| !d.contains(key)) {
                results.push((obj_id, f64::INFINITY));
                missing += 1;
            }
        }
    }
    if missing > 0 {
        log::warn!("{missing} (label, strategy) pairs have no estimate and count as misses");
    }
    let mut strategies = BTreeMap::new();
    for (s, (results, errors, dz, failures)) in per {
        let report = recall_table(&results, &meta, tau, s.name()).map_err(|e| v(e.to_string()))?;
        strategies.insert(
            s,
            StrategySummary {
                report,
                mean_error_mm: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
                median_abs_dz_mm: median(dz),
                failures,
            },
        );
    }
    Ok(Evaluation {
        noise: estimates.noise,
        tau,
        missing,
        strategies,
    })
}
