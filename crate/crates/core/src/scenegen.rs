//! Deterministic synthetic stereo scenes.
//!
//! A scene is a set of objects placed in a canonical left-camera frame plus a
//! list of camera viewpoints around the scene centroid. The layout is stored
//! as `scene_layout.json` so annotations can be recomputed later.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bopstore::{
    self, depth_path, features_path, filter_labels, rgb_path, scene_dir, write_depth_png, write_features, write_rgb_png,
    BopError, FrameAnnotation, ModelInfo, RgbImage, StereoFrame, StereoScene,
};
use crate::geometry::{CameraIntrinsics, GeometryError, Pose, StereoRig};
use crate::posesolve::View;
use crate::rasterizer::{
    max_pairwise_distance, region_partition, render_frame, visibility_from_zbuffer, DenseFeatureMaps, RasterError,
    ShapeSpec, TriMesh, NO_INSTANCE,
};

pub const LAYOUT_FILE: &str = "scene_layout.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("scene {scene}: {msg}")]
    Placement { scene: u32, msg: String },
    #[error("scene {scene}, frame {frame}: {source}")]
    Frame {
        scene: u32,
        frame: u32,
        #[source]
        source: BopError,
    },
    #[error(transparent)]
    Store(#[from] BopError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryEntry {
    pub obj_id: u32,
    pub shape: ShapeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub baseline_mm: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
            baseline_mm: 50.0,
        }
    }
}

impl CameraConfig {
    pub fn rig(&self) -> Result<StereoRig, GeometryError> {
        let k = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?;
        StereoRig::rectified(k, self.baseline_mm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub objects: Vec<LibraryEntry>,
    pub scenes: u32,
    /// Inclusive object count range per scene.
    pub n_objects: [u32; 2],
    pub views_per_scene: u32,
    /// Object center depth in the canonical left camera.
    pub depth_range_mm: [f64; 2],
    /// Object center X and Y range in the canonical left camera.
    pub lateral_range_mm: [f64; 2],
    /// Half-angle of the viewpoint cone around the canonical viewing direction.
    pub view_cone_deg: f64,
    /// Camera distance to the scene centroid per viewpoint.
    pub view_radius_mm: [f64; 2],
    pub camera: CameraConfig,
    pub region_count: usize,
    pub min_visib: f64,
    pub texture: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            objects: default_library(),
            scenes: 4,
            n_objects: [1, 15],
            views_per_scene: 25,
            depth_range_mm: [550.0, 1100.0],
            lateral_range_mm: [-220.0, 220.0],
            view_cone_deg: 30.0,
            view_radius_mm: [600.0, 1000.0],
            camera: CameraConfig::default(),
            region_count: crate::rasterizer::DEFAULT_REGION_COUNT,
            min_visib: bopstore::DEFAULT_MIN_VISIB,
            texture: true,
            seed: 0,
        }
    }
}

/// Six primitive objects; spheres and cylinders are flagged symmetric.
pub fn default_library() -> Vec<LibraryEntry> {
    let cuboid = |sx, sy, sz| ShapeSpec::Cuboid { sx, sy, sz, subdiv: 4 };
    vec![
        LibraryEntry { obj_id: 1, shape: cuboid(60.0, 60.0, 60.0) },
        LibraryEntry { obj_id: 2, shape: cuboid(90.0, 50.0, 30.0) },
        LibraryEntry { obj_id: 3, shape: cuboid(120.0, 40.0, 40.0) },
        LibraryEntry {
            obj_id: 4,
            shape: ShapeSpec::Sphere { radius: 35.0, stacks: 12, slices: 24 },
        },
        LibraryEntry {
            obj_id: 5,
            shape: ShapeSpec::Cylinder { radius: 25.0, height: 100.0, segments: 32 },
        },
        LibraryEntry {
            obj_id: 6,
            shape: ShapeSpec::Cylinder { radius: 40.0, height: 40.0, segments: 32 },
        },
    ]
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Config(m));
        if self.objects.is_empty() {
            return bad("object library is empty".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.obj_id) {
                return bad(format!("duplicate obj_id {}", o.obj_id));
            }
        }
        let [lo, hi] = self.n_objects;
        if lo == 0 || lo > hi {
            return bad(format!("n_objects range [{lo}, {hi}] is empty or starts at 0"));
        }
        if hi > 15 {
            return bad(format!("at most 15 objects per scene, got {hi}"));
        }
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !range_ok(self.depth_range_mm) || self.depth_range_mm[0] <= 0.0 {
            return bad(format!("depth_range_mm {:?} must be positive and ordered", self.depth_range_mm));
        }
        if !range_ok(self.lateral_range_mm) {
            return bad(format!("lateral_range_mm {:?} must be ordered", self.lateral_range_mm));
        }
        if !range_ok(self.view_radius_mm) || self.view_radius_mm[0] <= 0.0 {
            return bad(format!("view_radius_mm {:?} must be positive and ordered", self.view_radius_mm));
        }
        if !(0.0..90.0).contains(&self.view_cone_deg) {
            return bad(format!("view_cone_deg {} outside [0, 90)", self.view_cone_deg));
        }
        if self.views_per_scene == 0 || self.scenes == 0 {
            return bad("scenes and views_per_scene must be positive".into());
        }
        if self.region_count == 0 {
            return bad("region_count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.min_visib) {
            return bad(format!("min_visib {} outside [0, 1]", self.min_visib));
        }
        self.camera.rig()?;
        Ok(())
    }
}

/// Meshes with region labels plus their metadata, keyed by obj_id.
#[derive(Debug, Clone)]
pub struct ModelLibrary {
    pub meshes: BTreeMap<u32, TriMesh>,
    pub info: BTreeMap<u32, ModelInfo>,
}

impl ModelLibrary {
    pub fn build(entries: &[LibraryEntry], region_count: usize) -> Result<Self, GenError> {
        let mut meshes = BTreeMap::new();
        let mut info = BTreeMap::new();
        for e in entries {
            let mesh = e.shape.build()?;
            let k = region_count.min(mesh.faces.len());
            let regions = region_partition(&mesh, k, e.obj_id as u64)?;
            let mesh = mesh.with_regions(regions)?;
            info.insert(
                e.obj_id,
                ModelInfo {
                    shape: e.shape,
                    diameter: max_pairwise_distance(&mesh.vertices),
                    symmetric: e.shape.is_symmetric(),
                },
            );
            meshes.insert(e.obj_id, mesh);
        }
        Ok(Self { meshes, info })
    }

    pub fn from_info(info: &BTreeMap<u32, ModelInfo>, region_count: usize) -> Result<Self, GenError> {
        let entries: Vec<LibraryEntry> = info.iter().map(|(&obj_id, m)| LibraryEntry { obj_id, shape: m.shape }).collect();
        Self::build(&entries, region_count)
    }

    pub fn mesh(&self, obj_id: u32) -> Result<&TriMesh, GenError> {
        self.meshes
            .get(&obj_id)
            .ok_or_else(|| GenError::Config(format!("obj_id {obj_id} not in the model library")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub obj_id: u32,
    /// Object → canonical (world) frame.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub scene_id: u32,
    pub rig: StereoRig,
    pub region_count: usize,
    pub min_visib: f64,
    pub texture: bool,
    pub objects: Vec<PlacedObject>,
    /// World → left camera, one per frame.
    pub viewpoints: Vec<Pose>,
}

/// Uniformly distributed rotation (normalized 4D Gaussian).
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-9 {
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn scene_rng(seed: u64, scene_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(scene_id as u64);
    rng
}

fn in_both_frusta(rig: &StereoRig, p: &Vector3<f64>) -> bool {
    let inside = |k: &CameraIntrinsics, q: Vector3<f64>| q.z > 0.0 && k.contains(k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy);
    inside(&rig.left, *p) && inside(&rig.right, rig.extrinsic_l2r.transform_point(p))
}

/// Object placement in the canonical left-camera frame: uniform rotations,
/// centers projecting into both images, no bounding-sphere overlap. An
/// object that cannot be placed in 100 attempts is dropped; failing on the
/// first object is an error.
pub fn sample_scene(config: &GenConfig, library: &ModelLibrary, scene_seed: u64) -> Result<Vec<PlacedObject>, GenError> {
    let rig = config.camera.rig()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    sample_objects(config, library, &rig, &mut rng, 0)
}

fn sample_objects(
    config: &GenConfig,
    library: &ModelLibrary,
    rig: &StereoRig,
    rng: &mut ChaCha8Rng,
    scene: u32,
) -> Result<Vec<PlacedObject>, GenError> {
    let count = rng.random_range(config.n_objects[0]..=config.n_objects[1]);
    let mut placed: Vec<(PlacedObject, f64)> = Vec::new();
    for n in 0..count {
        let entry = &config.objects[rng.random_range(0..config.objects.len())];
        let radius = library.mesh(entry.obj_id)?.bounding_radius();
        let rotation = random_rotation(rng);
        let mut ok = None;
        for _ in 0..100 {
            let t = Vector3::new(
                uniform(rng, config.lateral_range_mm),
                uniform(rng, config.lateral_range_mm),
                uniform(rng, config.depth_range_mm),
            );
            if !in_both_frusta(rig, &t) {
                continue;
            }
            if placed.iter().all(|(o, r)| (o.pose.translation - t).norm() >= r + radius) {
                ok = Some(t);
                break;
            }
        }
        match ok {
            Some(translation) => placed.push((
                PlacedObject {
                    obj_id: entry.obj_id,
                    pose: Pose { rotation, translation },
                },
                radius,
            )),
            None if n == 0 => {
                return Err(GenError::Placement {
                    scene,
                    msg: "frustum too small to place a single object".into(),
                })
            }
            None => log::debug!("scene {scene}: dropped object {n} after 100 attempts"),
        }
    }
    Ok(placed.into_iter().map(|(o, _)| o).collect())
}

/// Looking from `eye` at `target`, camera Y as close to world +Y as possible.
fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let hint = if z.y.abs() > 0.99 { Vector3::x() } else { Vector3::y() };
    let x = hint.cross(&z).normalize();
    let y = z.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Pose {
        rotation,
        translation: -(rotation * eye),
    }
}

fn sample_viewpoints(config: &GenConfig, objects: &[PlacedObject], rng: &mut ChaCha8Rng) -> Vec<Pose> {
    let centroid = objects.iter().map(|o| o.pose.translation).sum::<Vector3<f64>>() / objects.len().max(1) as f64;
    let axis = (-centroid).normalize();
    let cone = config.view_cone_deg.to_radians();
    (0..config.views_per_scene)
        .map(|_| {
            // uniform over the spherical cap
            let cos_t = 1.0 - rng.random::<f64>() * (1.0 - cone.cos());
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let u = axis.cross(&helper).normalize();
            let v = axis.cross(&u);
            let dir = axis * cos_t + (u * phi.cos() + v * phi.sin()) * sin_t;
            let eye = centroid + dir * uniform(rng, config.view_radius_mm);
            look_at(&eye, &centroid)
        })
        .collect()
}

pub fn sample_layout(config: &GenConfig, library: &ModelLibrary, scene_id: u32) -> Result<SceneLayout, GenError> {
    let rig = config.camera.rig()?;
    let mut rng = scene_rng(config.seed, scene_id);
    let objects = sample_objects(config, library, &rig, &mut rng, scene_id)?;
    let viewpoints = sample_viewpoints(config, &objects, &mut rng);
    Ok(SceneLayout {
        scene_id,
        rig,
        region_count: config.region_count,
        min_visib: config.min_visib,
        texture: config.texture,
        objects,
        viewpoints,
    })
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn hash3(a: i64, b: i64, c: i64, salt: u64) -> u64 {
    mix(mix(mix(salt ^ a as u64) ^ b as u64) ^ c as u64)
}

/// Flat gray per surface region, tinted per object, plus a procedural
/// texture fixed to the object surface. Background texture depends only on
/// the viewing direction.
pub fn shade(maps: &DenseFeatureMaps, obj_ids: &[u32], k: &CameraIntrinsics, texture: bool) -> RgbImage {
    let mut img = RgbImage::new(maps.width, maps.height);
    let w = maps.width as usize;
    for i in 0..maps.len() {
        let (x, y) = (i % w, i / w);
        let inst = maps.instance[i];
        let rgb = if inst == NO_INSTANCE {
            let d = k.ray(x as f64, y as f64);
            let cell = hash3((d.x * 120.0).floor() as i64, (d.y * 120.0).floor() as i64, 0, 0xbac6);
            let g = 40 + (cell % 120) as i32;
            [g, g, g]
        } else {
            let obj = obj_ids[inst as usize] as u64;
            let base = 70 + (hash3(maps.region[i] as i64, 0, 0, obj) % 110) as i32;
            let tex = if texture {
                let p = maps.xyz[i];
                let cell = hash3((p[0] / 3.0).floor() as i64, (p[1] / 3.0).floor() as i64, (p[2] / 3.0).floor() as i64, obj);
                (cell % 61) as i32 - 30
            } else {
                0
            };
            let tint = mix(obj);
            let g = base + tex;
            [g + (tint % 31) as i32 - 15, g + ((tint >> 8) % 31) as i32 - 15, g + ((tint >> 16) % 31) as i32 - 15]
        };
        img.put(x, y, rgb.map(|c| c.clamp(0, 255) as u8));
    }
    img
}

/// Rendered and annotated view of one frame.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub maps: DenseFeatureMaps,
    pub rgb: RgbImage,
    pub visibility: Vec<f64>,
    pub bboxes: Vec<Option<crate::geometry::BoundingBox>>,
}

pub fn render_view(
    library: &ModelLibrary,
    objects: &[PlacedObject],
    camera_from_world: &Pose,
    k: &CameraIntrinsics,
    texture: bool,
) -> Result<RenderedView, GenError> {
    let posed: Vec<(&TriMesh, Pose)> = objects
        .iter()
        .map(|o| Ok((library.mesh(o.obj_id)?, camera_from_world.compose(&o.pose))))
        .collect::<Result<_, GenError>>()?;
    let (maps, zb) = render_frame(&posed, k);
    let visibility = visibility_from_zbuffer(&zb, &posed, k);
    let bboxes = (0..objects.len()).map(|i| zb.instance_bbox(i as u32)).collect();
    let ids: Vec<u32> = objects.iter().map(|o| o.obj_id).collect();
    let rgb = shade(&maps, &ids, k, texture);
    Ok(RenderedView {
        maps,
        rgb,
        visibility,
        bboxes,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub frames: usize,
    pub labels_total: usize,
    pub labels_kept: usize,
    pub labels_removed: usize,
    /// Sum over kept labels of the mean of both views' visible fractions.
    pub visib_sum: f64,
}

/// Renders every frame of a layout and writes images, feature archives and
/// the scene JSON files.
pub fn annotate_scene(root: &Path, layout: &SceneLayout, library: &ModelLibrary) -> Result<SceneStats, GenError> {
    let rig = &layout.rig;
    let mut stats = SceneStats::default();
    let mut frames = Vec::new();
    for (frame_id, view) in layout.viewpoints.iter().enumerate() {
        let frame = frame_id as u32;
        let ctx = |source: BopError| GenError::Frame {
            scene: layout.scene_id,
            frame,
            source,
        };
        let right_from_world = rig.extrinsic_l2r.compose(view);
        let mut left = render_view(library, &layout.objects, view, &rig.left, layout.texture)?;
        let right = render_view(library, &layout.objects, &right_from_world, &rig.right, layout.texture)?;
        let fb = rig.left.fx * rig.baseline();
        left.maps.disparity = Some(left.maps.depth.iter().map(|&z| if z.is_finite() && z > 0.0 { fb / z } else { 0.0 }).collect());

        let all: Vec<FrameAnnotation> = layout
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| FrameAnnotation {
                obj_id: o.obj_id,
                inst_id: i as u32,
                pose: view.compose(&o.pose),
                visib_fract_left: left.visibility[i],
                visib_fract_right: right.visibility[i],
                bbox_left: left.bboxes[i],
                bbox_right: right.bboxes[i],
            })
            .collect();
        let kept = filter_labels(&all, layout.min_visib);
        stats.frames += 1;
        stats.labels_total += all.len();
        stats.labels_kept += kept.len();
        stats.labels_removed += all.len() - kept.len();
        stats.visib_sum += kept.iter().map(|a| 0.5 * (a.visib_fract_left + a.visib_fract_right)).sum::<f64>();

        for (v, r) in [(View::Left, &left), (View::Right, &right)] {
            let id = layout.scene_id;
            write_rgb_png(&rgb_path(root, id, v, frame), &r.rgb).map_err(ctx)?;
            write_depth_png(&depth_path(root, id, v, frame), r.maps.width, r.maps.height, &r.maps.depth).map_err(ctx)?;
            write_features(&r.maps, &features_path(root, id, v, frame)).map_err(ctx)?;
        }
        frames.push(StereoFrame {
            frame_id: frame,
            annotations: kept,
        });
    }
    bopstore::write_scene(
        &StereoScene {
            scene_id: layout.scene_id,
            rig: *rig,
            frames,
        },
        root,
    )?;
    Ok(stats)
}

pub fn write_layout(root: &Path, layout: &SceneLayout) -> Result<(), GenError> {
    let path = scene_dir(root, layout.scene_id).join(LAYOUT_FILE);
    let text = serde_json::to_string_pretty(layout).map_err(|e| BopError::Parse {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    bopstore::write_atomic(&path, text.as_bytes())?;
    Ok(())
}

pub fn read_layout(root: &Path, scene_id: u32) -> Result<SceneLayout, GenError> {
    let path = scene_dir(root, scene_id).join(LAYOUT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| BopError::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text).map_err(|e| BopError::Parse {
        path,
        msg: e.to_string(),
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub scenes: usize,
    pub frames: usize,
    pub labels_total: usize,
    pub labels_kept: usize,
    pub labels_removed: usize,
    /// Mean visible fraction of kept labels, averaged over both views.
    pub mean_visibility: f64,
}

impl GenerationStats {
    pub fn from_scenes(scenes: &[SceneStats]) -> Self {
        let sum = |f: fn(&SceneStats) -> usize| scenes.iter().map(f).sum::<usize>();
        let kept = sum(|s| s.labels_kept);
        let visib: f64 = scenes.iter().map(|s| s.visib_sum).sum();
        Self {
            scenes: scenes.len(),
            frames: sum(|s| s.frames),
            labels_total: sum(|s| s.labels_total),
            labels_kept: kept,
            labels_removed: sum(|s| s.labels_removed),
            mean_visibility: if kept > 0 { visib / kept as f64 } else { 0.0 },
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    stats: &'a GenerationStats,
    seed: u64,
    config: &'a GenConfig,
    /// Camera-distance and viewpoint laws are not taken from any reference
    /// dataset.
    placeholder_defaults: [&'static str; 3],
}

/// Generates `config.scenes` scenes under `root` in parallel on the current
/// rayon pool and writes `manifest.json`.
pub fn generate_dataset(config: &GenConfig, root: &Path) -> Result<GenerationStats, GenError> {
    config.validate()?;
    fs::create_dir_all(root).map_err(|e| BopError::Io {
        path: root.to_path_buf(),
        source: e,
    })?;
    let library = ModelLibrary::build(&config.objects, config.region_count)?;
    bopstore::write_models_info(root, &library.info)?;
    let per_scene: Vec<SceneStats> = (0..config.scenes)
        .into_par_iter()
        .map(|scene_id| {
            let layout = sample_layout(config, &library, scene_id)?;
            write_layout(root, &layout)?;
            annotate_scene(root, &layout, &library)
        })
        .collect::<Result<_, _>>()?;
    let stats = GenerationStats::from_scenes(&per_scene);
    let manifest = Manifest {
        stats: &stats,
        seed: config.seed,
        config,
        placeholder_defaults: ["depth_range_mm", "view_radius_mm", "view_cone_deg"],
    };
    let path = root.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| BopError::Parse {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    bopstore::write_atomic(&path, text.as_bytes())?;
    Ok(stats)
}
