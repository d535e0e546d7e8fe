use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DisparitySource, EstimateConfig};
use super::noise::{perturb, NoiseConfig};
use super::{write_json, CliError};
use crate::bopstore::{features_path, list_scenes, read_features, read_models_info, read_rgb_png, read_scene, rgb_path, StereoScene};
use crate::geometry::Pose;
use crate::posesolve::{correspondences_from_maps, estimate, FrameInputs, FusionStrategy, SolverParams, View};
use crate::scenegen::ModelLibrary;
use crate::stereomatch::{block_match_pair, disparity_from_depth, DisparityMap, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct EstimateRecord {
    pub scene_id: u32,
    pub frame_id: u32,
    pub obj_id: u32,
    pub inst_id: u32,
    pub strategy: FusionStrategy,
    /// None when the solver failed; see `error`.
    pub cam_R_m2c: Option<[f64; 9]>,
    pub cam_t_m2c: Option<[f64; 3]>,
    pub inlier_count: usize,
    pub correspondence_count: usize,
    pub converged: bool,
    pub fallback: bool,
    pub reprojection_px_left: Option<f64>,
    pub reprojection_px_right: Option<f64>,
    pub residual_mm: Option<f64>,
    pub error: Option<String>,
}

impl EstimateRecord {
    pub fn pose(&self) -> Option<Pose> {
        let (r, t) = (self.cam_R_m2c?, self.cam_t_m2c?);
        Some(Pose {
            rotation: nalgebra::Matrix3::from_row_slice(&r),
            translation: nalgebra::Vector3::from(t),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub seed: u64,
    pub noise: NoiseConfig,
    pub disparity_source: DisparitySource,
    pub solver: SolverParams,
    pub strategies: Vec<FusionStrategy>,
    pub records: Vec<EstimateRecord>,
}

pub(crate) fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn frame_seed(seed: u64, scene: u32, frame: u32, inst: u32) -> u64 {
    mix(mix(mix(seed ^ scene as u64) ^ frame as u64) ^ inst as u64)
}

fn row_major(m: &nalgebra::Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[(r, c)];
        }
    }
    out
}

fn frame_disparity(
    root: &Path,
    scene: &StereoScene,
    frame_id: u32,
    depth: &[f64],
    cfg: &EstimateConfig,
    seed: u64,
) -> Result<DisparityMap, CliError> {
    let rig = &scene.rig;
    let ctx = |e: String| CliError::Runtime(format!("scene {}, frame {frame_id}: {e}", scene.scene_id));
    match cfg.disparity_source {
        DisparitySource::Gt => disparity_from_depth(depth, rig.left.width, rig.left.height, rig, cfg.noise.disparity_sigma, seed)
            .map_err(|e| ctx(e.to_string())),
        DisparitySource::BlockMatch => {
            let load = |v: View| -> Result<GrayImage, CliError> {
                let img = read_rgb_png(&rgb_path(root, scene.scene_id, v, frame_id)).map_err(|e| ctx(e.to_string()))?;
                GrayImage::from_rgb(img.width, img.height, &img.data).map_err(|e| ctx(e.to_string()))
            };
            let (l, r) = (load(View::Left)?, load(View::Right)?);
            Ok(block_match_pair(&l, &r, &cfg.block_match).map_err(|e| ctx(e.to_string()))?.0)
        }
    }
}

fn process_frame(
    root: &Path,
    scene: &StereoScene,
    frame_idx: usize,
    library: &ModelLibrary,
    cfg: &EstimateConfig,
    solver: &SolverParams,
    seed: u64,
) -> Result<Vec<EstimateRecord>, CliError> {
    let frame = &scene.frames[frame_idx];
    let mut records = Vec::new();
    if frame.annotations.is_empty() {
        return Ok(records);
    }
    let sid = scene.scene_id;
    let fid = frame.frame_id;
    let ctx = |e: String| CliError::Runtime(format!("scene {sid}, frame {fid}: {e}"));
    let left = read_features(&features_path(root, sid, View::Left, fid)).map_err(|e| ctx(e.to_string()))?;
    let right = read_features(&features_path(root, sid, View::Right, fid)).map_err(|e| ctx(e.to_string()))?;
    let needs_disp = cfg.strategies.iter().any(|s| s.needs_disparity());
    let disparity = if needs_disp {
        Some(frame_disparity(root, scene, fid, &left.depth, cfg, frame_seed(seed, sid, fid, u32::MAX))?)
    } else {
        None
    };
    for ann in &frame.annotations {
        let mesh = library
            .meshes
            .get(&ann.obj_id)
            .ok_or_else(|| CliError::Validation(format!("scene {sid}, frame {fid}: obj_id {} missing from models_info.json", ann.obj_id)))?;
        let half = mesh.half_extent();
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(seed, sid, fid, ann.inst_id));
        let l = correspondences_from_maps(&left, ann.inst_id, View::Left, cfg.max_correspondences);
        let r = correspondences_from_maps(&right, ann.inst_id, View::Right, cfg.max_correspondences);
        let mut corrs = perturb(&l, &scene.rig.left, &half, &cfg.noise, &mut rng);
        corrs.extend(&perturb(&r, &scene.rig.right, &half, &cfg.noise, &mut rng));
        let inputs = FrameInputs {
            correspondences: &corrs,
            rig: &scene.rig,
            disparity: disparity.as_ref(),
        };
        let params = SolverParams {
            seed: frame_seed(solver.seed, sid, fid, ann.inst_id),
            ..*solver
        };
        for &strategy in &cfg.strategies {
            let base = EstimateRecord {
                scene_id: sid,
                frame_id: fid,
                obj_id: ann.obj_id,
                inst_id: ann.inst_id,
                strategy,
                cam_R_m2c: None,
                cam_t_m2c: None,
                inlier_count: 0,
                correspondence_count: 0,
                converged: false,
                fallback: false,
                reprojection_px_left: None,
                reprojection_px_right: None,
                residual_mm: None,
                error: None,
            };
            records.push(match estimate(strategy, &inputs, &params) {
                Ok(est) => {
                    let t = est.pose.translation;
                    EstimateRecord {
                        cam_R_m2c: Some(row_major(&est.pose.rotation)),
                        cam_t_m2c: Some([t.x, t.y, t.z]),
                        inlier_count: est.inlier_count,
                        correspondence_count: est.correspondence_count,
                        converged: est.converged,
                        fallback: est.fallback,
                        reprojection_px_left: est.reprojection_px_left,
                        reprojection_px_right: est.reprojection_px_right,
                        residual_mm: est.residual_mm,
                        ..base
                    }
                }
                Err(e) => EstimateRecord {
                    error: Some(e.to_string()),
                    ..base
                },
            });
        }
    }
    Ok(records)
}

/// Runs every configured strategy on every kept label of the dataset.
pub fn estimate_dataset(root: &Path, cfg: &EstimateConfig, solver: &SolverParams, seed: u64) -> Result<EstimatesFile, CliError> {
    let info = read_models_info(root).map_err(|e| CliError::Validation(e.to_string()))?;
    let library = ModelLibrary::from_info(&info, 1).map_err(|e| CliError::Runtime(e.to_string()))?;
    let scenes: Vec<StereoScene> = list_scenes(root)
        .map_err(|e| CliError::Validation(e.to_string()))?
        .into_iter()
        .map(|id| read_scene(root, id).map_err(|e| CliError::Validation(e.to_string())))
        .collect::<Result<_, _>>()?;
    if scenes.is_empty() {
        return Err(CliError::Validation(format!("{}: no scenes found", root.display())));
    }
    let jobs: Vec<(usize, usize)> = scenes
        .iter()
        .enumerate()
        .flat_map(|(si, s)| (0..s.frames.len()).map(move |fi| (si, fi)))
        .collect();
    let per_frame: Vec<Vec<EstimateRecord>> = jobs
        .par_iter()
        .map(|&(si, fi)| process_frame(root, &scenes[si], fi, &library, cfg, solver, seed))
        .collect::<Result<_, _>>()?;
    Ok(EstimatesFile {
        seed,
        noise: cfg.noise,
        disparity_source: cfg.disparity_source,
        solver: *solver,
        strategies: cfg.strategies.clone(),
        records: per_frame.into_iter().flatten().collect(),
    })
}

pub fn write_estimates(path: &Path, file: &EstimatesFile) -> Result<(), CliError> {
    write_json(path, file)
}

pub fn read_estimates(path: &Path) -> Result<EstimatesFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
