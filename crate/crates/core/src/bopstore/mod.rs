//! BOP scene layout with a stereo extension:
//!
//! ```text
//! <root>/models/models_info.json
//! <root>/<scene_id:06>/stereo_rig.json
//! <root>/<scene_id:06>/scene_gt.json
//! <root>/<scene_id:06>/scene_camera.json
//! <root>/<scene_id:06>/{left,right}/{rgb,depth}/<frame_id:06>.png
//! <root>/<scene_id:06>/features/{left,right}/<frame_id:06>.spkf
//! ```

mod features;
mod images;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, CameraIntrinsics, GeometryError, Pose, StereoRig};
use crate::posesolve::View;
use crate::rasterizer::ShapeSpec;

pub use features::{decode_features, encode_features, read_features, write_features, SPKF_MAGIC, SPKF_VERSION};
pub use images::{read_depth_png, read_rgb_png, write_depth_png, write_rgb_png, RgbImage, DEPTH_SCALE};

pub const DEFAULT_MIN_VISIB: f64 = 0.10;

#[derive(Debug, Error)]
pub enum BopError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
    #[error("corrupt feature archive: {0}")]
    Corrupt(String),
    #[error("unsupported feature archive: {0}")]
    Version(String),
    #[error("{path}: image: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BopError + '_ {
    move |source| BopError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> BopError {
    BopError::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BopError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BopError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BopError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

/// One ground-truth object instance in a stereo frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub obj_id: u32,
    /// Index of the instance within the scene layout.
    pub inst_id: u32,
    /// Object → left camera.
    pub pose: Pose,
    pub visib_fract_left: f64,
    pub visib_fract_right: f64,
    pub bbox_left: Option<BoundingBox>,
    pub bbox_right: Option<BoundingBox>,
}

impl FrameAnnotation {
    pub fn visib(&self, view: View) -> f64 {
        match view {
            View::Left => self.visib_fract_left,
            View::Right => self.visib_fract_right,
        }
    }

    pub fn bbox(&self, view: View) -> Option<BoundingBox> {
        match view {
            View::Left => self.bbox_left,
            View::Right => self.bbox_right,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    pub frame_id: u32,
    pub annotations: Vec<FrameAnnotation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoScene {
    pub scene_id: u32,
    pub rig: StereoRig,
    pub frames: Vec<StereoFrame>,
}

fn view_dir(view: View) -> &'static str {
    match view {
        View::Left => "left",
        View::Right => "right",
    }
}

pub fn scene_dir(root: &Path, scene_id: u32) -> PathBuf {
    root.join(format!("{scene_id:06}"))
}

pub fn rgb_path(root: &Path, scene_id: u32, view: View, frame_id: u32) -> PathBuf {
    scene_dir(root, scene_id).join(view_dir(view)).join("rgb").join(format!("{frame_id:06}.png"))
}

pub fn depth_path(root: &Path, scene_id: u32, view: View, frame_id: u32) -> PathBuf {
    scene_dir(root, scene_id).join(view_dir(view)).join("depth").join(format!("{frame_id:06}.png"))
}

pub fn features_path(root: &Path, scene_id: u32, view: View, frame_id: u32) -> PathBuf {
    scene_dir(root, scene_id)
        .join("features")
        .join(view_dir(view))
        .join(format!("{frame_id:06}.spkf"))
}

pub fn models_info_path(root: &Path) -> PathBuf {
    root.join("models").join("models_info.json")
}

/// Scene ids present under `root`, sorted.
pub fn list_scenes(root: &Path) -> Result<Vec<u32>, BopError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.len() == 6 && entry.path().join("scene_gt.json").is_file() {
            if let Ok(id) = name.parse() {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// Keeps annotations whose visible fraction is at least `min_visib` in both
/// views.
pub fn filter_labels(annotations: &[FrameAnnotation], min_visib: f64) -> Vec<FrameAnnotation> {
    annotations
        .iter()
        .filter(|a| a.visib_fract_left >= min_visib && a.visib_fract_right >= min_visib)
        .cloned()
        .collect()
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
}

fn from_row_major(r: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(r)
}

const NO_BOX: [i32; 4] = [-1, -1, -1, -1];

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
#[serde(deny_unknown_fields)]
struct GtRecord {
    obj_id: u32,
    inst_id: u32,
    cam_R_m2c: [f64; 9],
    cam_t_m2c: [f64; 3],
    visib_fract_left: f64,
    visib_fract_right: f64,
    bbox_left: [i32; 4],
    bbox_right: [i32; 4],
}

impl GtRecord {
    fn from_annotation(a: &FrameAnnotation) -> Self {
        let t = a.pose.translation;
        GtRecord {
            obj_id: a.obj_id,
            inst_id: a.inst_id,
            cam_R_m2c: row_major(&a.pose.rotation),
            cam_t_m2c: [t.x, t.y, t.z],
            visib_fract_left: a.visib_fract_left,
            visib_fract_right: a.visib_fract_right,
            bbox_left: a.bbox_left.map_or(NO_BOX, |b| b.to_xywh()),
            bbox_right: a.bbox_right.map_or(NO_BOX, |b| b.to_xywh()),
        }
    }

    fn into_annotation(self, path: &Path, frame: u32) -> Result<FrameAnnotation, BopError> {
        let ctx = |msg: String| parse_err(path, format!("frame {frame}, obj_id {}: {msg}", self.obj_id));
        let pose = Pose::new(from_row_major(&self.cam_R_m2c), Vector3::from(self.cam_t_m2c)).map_err(|e| ctx(format!("cam_R_m2c: {e}")))?;
        for (key, v) in [("visib_fract_left", self.visib_fract_left), ("visib_fract_right", self.visib_fract_right)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ctx(format!("{key} = {v} outside [0, 1]")));
            }
        }
        let bbox = |key: &str, b: [i32; 4]| -> Result<Option<BoundingBox>, BopError> {
            if b == NO_BOX {
                Ok(None)
            } else {
                BoundingBox::from_xywh(b).map(Some).map_err(|e| ctx(format!("{key}: {e}")))
            }
        };
        Ok(FrameAnnotation {
            obj_id: self.obj_id,
            inst_id: self.inst_id,
            pose,
            visib_fract_left: self.visib_fract_left,
            visib_fract_right: self.visib_fract_right,
            bbox_left: bbox("bbox_left", self.bbox_left)?,
            bbox_right: bbox("bbox_right", self.bbox_right)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    cam_K: [f64; 9],
    cam_K_right: [f64; 9],
    width: u32,
    height: u32,
    depth_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
#[serde(deny_unknown_fields)]
struct RigRecord {
    baseline: f64,
    #[serde(rename = "R")]
    rotation: [f64; 9],
    t: [f64; 3],
    cam_K_left: [f64; 9],
    cam_K_right: [f64; 9],
    width: u32,
    height: u32,
    rectified: bool,
}

impl RigRecord {
    fn from_rig(rig: &StereoRig) -> Self {
        let t = rig.extrinsic_l2r.translation;
        RigRecord {
            baseline: rig.baseline(),
            rotation: row_major(&rig.extrinsic_l2r.rotation),
            t: [t.x, t.y, t.z],
            cam_K_left: rig.left.k_row_major(),
            cam_K_right: rig.right.k_row_major(),
            width: rig.left.width,
            height: rig.left.height,
            rectified: rig.rectified,
        }
    }

    fn into_rig(self, path: &Path) -> Result<StereoRig, BopError> {
        let ctx = |e: GeometryError| parse_err(path, e.to_string());
        let left = CameraIntrinsics::from_k_row_major(&self.cam_K_left, self.width, self.height).map_err(ctx)?;
        let right = CameraIntrinsics::from_k_row_major(&self.cam_K_right, self.width, self.height).map_err(ctx)?;
        let ext = Pose::new(from_row_major(&self.rotation), Vector3::from(self.t)).map_err(ctx)?;
        let rig = StereoRig::general(left, right, ext).map_err(ctx)?;
        if rig.rectified != self.rectified {
            return Err(parse_err(path, format!("rectified = {} contradicts R, t", self.rectified)));
        }
        if (rig.baseline() - self.baseline).abs() > 1e-6 * self.baseline.abs().max(1.0) {
            return Err(parse_err(path, format!("baseline {} != |t| = {}", self.baseline, rig.baseline())));
        }
        Ok(rig)
    }
}

/// Writes the scene JSON files. Images and feature archives are written
/// separately.
pub fn write_scene(scene: &StereoScene, root: &Path) -> Result<(), BopError> {
    scene.rig.validate()?;
    let mut seen = std::collections::BTreeSet::new();
    for f in &scene.frames {
        if !seen.insert(f.frame_id) {
            return Err(BopError::Inconsistent(format!("scene {}: duplicate frame {}", scene.scene_id, f.frame_id)));
        }
    }
    let dir = scene_dir(root, scene.scene_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_json(&dir.join("stereo_rig.json"), &RigRecord::from_rig(&scene.rig))?;
    let gt: BTreeMap<u32, Vec<GtRecord>> = scene
        .frames
        .iter()
        .map(|f| (f.frame_id, f.annotations.iter().map(GtRecord::from_annotation).collect()))
        .collect();
    write_json(&dir.join("scene_gt.json"), &gt)?;
    let cams: BTreeMap<u32, CameraRecord> = scene
        .frames
        .iter()
        .map(|f| {
            (
                f.frame_id,
                CameraRecord {
                    cam_K: scene.rig.left.k_row_major(),
                    cam_K_right: scene.rig.right.k_row_major(),
                    width: scene.rig.left.width,
                    height: scene.rig.left.height,
                    depth_scale: DEPTH_SCALE,
                },
            )
        })
        .collect();
    write_json(&dir.join("scene_camera.json"), &cams)
}

pub fn read_scene(root: &Path, scene_id: u32) -> Result<StereoScene, BopError> {
    let dir = scene_dir(root, scene_id);
    let rig_path = dir.join("stereo_rig.json");
    let rig = read_json::<RigRecord>(&rig_path)?.into_rig(&rig_path)?;
    let gt_path = dir.join("scene_gt.json");
    let gt: BTreeMap<u32, Vec<GtRecord>> = read_json(&gt_path)?;
    let cam_path = dir.join("scene_camera.json");
    let cams: BTreeMap<u32, CameraRecord> = read_json(&cam_path)?;
    if cams.keys().ne(gt.keys()) {
        return Err(BopError::Inconsistent(format!(
            "scene {scene_id}: frame ids differ between scene_gt.json and scene_camera.json"
        )));
    }
    let close = |a: &[f64; 9], b: &[f64; 9]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * y.abs().max(1.0));
    for (frame, c) in &cams {
        if !close(&c.cam_K, &rig.left.k_row_major())
            || !close(&c.cam_K_right, &rig.right.k_row_major())
            || c.width != rig.left.width
            || c.height != rig.left.height
        {
            return Err(parse_err(&cam_path, format!("frame {frame}: camera does not match stereo_rig.json")));
        }
        if c.depth_scale != DEPTH_SCALE {
            return Err(parse_err(&cam_path, format!("frame {frame}: depth_scale {} unsupported", c.depth_scale)));
        }
    }
    let mut frames = Vec::with_capacity(gt.len());
    for (frame_id, records) in gt {
        let annotations = records
            .into_iter()
            .map(|r| r.into_annotation(&gt_path, frame_id))
            .collect::<Result<_, _>>()?;
        frames.push(StereoFrame { frame_id, annotations });
    }
    Ok(StereoScene { scene_id, rig, frames })
}

/// Object model entry in `models/models_info.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInfo {
    pub shape: ShapeSpec,
    pub diameter: f64,
    pub symmetric: bool,
}

pub fn write_models_info(root: &Path, models: &BTreeMap<u32, ModelInfo>) -> Result<(), BopError> {
    write_json(&models_info_path(root), models)
}

pub fn read_models_info(root: &Path) -> Result<BTreeMap<u32, ModelInfo>, BopError> {
    read_json(&models_info_path(root))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig() -> StereoRig {
        StereoRig::rectified(CameraIntrinsics::new(600.0, 600.0, 319.5, 239.5, 640, 480).unwrap(), 50.0).unwrap()
    }

    fn ann(obj_id: u32, l: f64, r: f64) -> FrameAnnotation {
        FrameAnnotation {
            obj_id,
            inst_id: obj_id + 10,
            pose: Pose::from_axis_angle(Vector3::new(0.3, -0.7, 1.1), Vector3::new(12.345678901, -3.25, 712.5)),
            visib_fract_left: l,
            visib_fract_right: r,
            bbox_left: BoundingBox::new(10, 20, 110, 90).ok(),
            bbox_right: if r > 0.0 { BoundingBox::new(0, 20, 95, 90).ok() } else { None },
        }
    }

    fn scene() -> StereoScene {
        StereoScene {
            scene_id: 3,
            rig: rig(),
            frames: vec![
                StereoFrame {
                    frame_id: 0,
                    annotations: vec![ann(1, 0.9, 0.8), ann(2, 0.3, 0.0)],
                },
                StereoFrame {
                    frame_id: 10,
                    annotations: vec![],
                },
                StereoFrame {
                    frame_id: 2,
                    annotations: vec![ann(5, 1.0, 1.0)],
                },
            ],
        }
    }

    #[test]
    fn scene_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = scene();
        write_scene(&s, dir.path()).unwrap();
        let back = read_scene(dir.path(), 3).unwrap();
        let mut expected = s.clone();
        expected.frames.sort_by_key(|f| f.frame_id);
        assert_eq!(back, expected);
        assert_eq!(list_scenes(dir.path()).unwrap(), vec![3]);
        // frame keys in numeric order
        let text = fs::read_to_string(scene_dir(dir.path(), 3).join("scene_gt.json")).unwrap();
        assert!(text.find("\"2\"").unwrap() < text.find("\"10\"").unwrap());
    }

    #[test]
    fn empty_scene() {
        let dir = tempfile::tempdir().unwrap();
        let s = StereoScene {
            scene_id: 0,
            rig: rig(),
            frames: vec![],
        };
        write_scene(&s, dir.path()).unwrap();
        let text = fs::read_to_string(scene_dir(dir.path(), 0).join("scene_gt.json")).unwrap();
        assert_eq!(text.trim(), "{}");
        assert_eq!(read_scene(dir.path(), 0).unwrap(), s);
    }

    #[test]
    fn rig_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&scene(), dir.path()).unwrap();
        let path = scene_dir(dir.path(), 3).join("scene_camera.json");
        let text = fs::read_to_string(&path).unwrap().replacen("319.5", "320.5", 1);
        fs::write(&path, text).unwrap();
        let err = read_scene(dir.path(), 3).unwrap_err().to_string();
        assert!(err.contains("scene_camera.json") && err.contains("frame 0"), "{err}");
    }

    #[test]
    fn malformed_records_name_file_and_key() {
        let dir = tempfile::tempdir().unwrap();
        write_scene(&scene(), dir.path()).unwrap();
        let path = scene_dir(dir.path(), 3).join("scene_gt.json");
        let text = fs::read_to_string(&path).unwrap().replacen("\"visib_fract_left\": 0.9", "\"visib_fract_left\": 1.9", 1);
        fs::write(&path, text).unwrap();
        let err = read_scene(dir.path(), 3).unwrap_err().to_string();
        assert!(err.contains("scene_gt.json") && err.contains("visib_fract_left"), "{err}");
        assert!(matches!(read_scene(dir.path(), 4), Err(BopError::Io { .. })));
    }

    #[test]
    fn duplicate_frames_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = scene();
        s.frames[1].frame_id = 0;
        assert!(matches!(write_scene(&s, dir.path()), Err(BopError::Inconsistent(_))));
    }

    #[test]
    fn either_view_filter() {
        let a = ann(1, 0.05, 0.50);
        let b = ann(2, 0.12, 0.11);
        let c = ann(3, 0.10, 0.10);
        let kept = filter_labels(&[a, b.clone(), c.clone()], DEFAULT_MIN_VISIB);
        assert_eq!(kept, vec![b, c]);
        assert!(filter_labels(&[], DEFAULT_MIN_VISIB).is_empty());
        assert_eq!(filter_labels(&kept, DEFAULT_MIN_VISIB), kept);
    }

    #[test]
    fn models_info_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = BTreeMap::new();
        m.insert(
            1,
            ModelInfo {
                shape: ShapeSpec::Sphere {
                    radius: 40.0,
                    stacks: 12,
                    slices: 24,
                },
                diameter: 80.0,
                symmetric: true,
            },
        );
        write_models_info(dir.path(), &m).unwrap();
        assert_eq!(read_models_info(dir.path()).unwrap(), m);
    }
}
