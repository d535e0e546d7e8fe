use nalgebra::Vector3;

use super::mesh::{TriMesh, MIN_FACE_AREA};
use super::selfocc::self_occlusion_scene;
use super::{DenseFeatureMaps, NO_INSTANCE};
use crate::geometry::{CameraIntrinsics, Pose};

/// Surfaces closer than this (mm) along the optical axis are ignored.
const NEAR_PLANE: f64 = 1e-6;
/// Barycentric slack so that pixel centers on shared edges are not dropped.
const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub instance: u32,
    pub face: u32,
    /// Barycentric weights of the face's second and third vertex.
    pub b1: f64,
    pub b2: f64,
}

const NO_HIT: Hit = Hit {
    instance: NO_INSTANCE,
    face: u32::MAX,
    b1: 0.0,
    b2: 0.0,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub faces_drawn: usize,
    pub degenerate_faces_skipped: usize,
}

/// Nearest-surface buffer: one ray per pixel center.
#[derive(Debug, Clone)]
pub struct ZBuffer {
    pub width: u32,
    pub height: u32,
    /// Camera-frame z (mm); `f64::INFINITY` where nothing was hit.
    pub depth: Vec<f64>,
    pub hit: Vec<Hit>,
    pub stats: RenderStats,
}

impl ZBuffer {
    fn new(k: &CameraIntrinsics) -> Self {
        let n = k.width as usize * k.height as usize;
        ZBuffer {
            width: k.width,
            height: k.height,
            depth: vec![f64::INFINITY; n],
            hit: vec![NO_HIT; n],
            stats: RenderStats::default(),
        }
    }

    pub fn covered(&self, i: usize) -> bool {
        self.hit[i].instance != NO_INSTANCE
    }

    pub fn instance_count(&self, instance: u32) -> usize {
        self.hit.iter().filter(|h| h.instance == instance).count()
    }

    /// Half-open box around the pixels won by `instance`.
    pub fn instance_bbox(&self, instance: u32) -> Option<crate::geometry::BoundingBox> {
        let w = self.width as usize;
        let mut bounds: Option<(i32, i32, i32, i32)> = None;
        for (i, h) in self.hit.iter().enumerate() {
            if h.instance != instance {
                continue;
            }
            let (x, y) = ((i % w) as i32, (i / w) as i32);
            bounds = Some(match bounds {
                None => (x, y, x + 1, y + 1),
                Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)),
            });
        }
        bounds.map(|(x0, y0, x1, y1)| crate::geometry::BoundingBox {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
        })
    }

    fn draw(&mut self, instance: u32, mesh: &TriMesh, pose: &Pose, k: &CameraIntrinsics) {
        let cam: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| pose.transform_point(v)).collect();
        let (w, h) = (self.width as i64, self.height as i64);
        for (fi, f) in mesh.faces.iter().enumerate() {
            if mesh.face_area(fi) <= MIN_FACE_AREA {
                self.stats.degenerate_faces_skipped += 1;
                continue;
            }
            let a = cam[f[0] as usize];
            let b = cam[f[1] as usize];
            let c = cam[f[2] as usize];
            if a.z <= NEAR_PLANE && b.z <= NEAR_PLANE && c.z <= NEAR_PLANE {
                continue;
            }
            let (x0, y0, x1, y1) = if a.z > NEAR_PLANE && b.z > NEAR_PLANE && c.z > NEAR_PLANE {
                let us = [a, b, c].map(|p| k.fx * p.x / p.z + k.cx);
                let vs = [a, b, c].map(|p| k.fy * p.y / p.z + k.cy);
                let umin = us.iter().cloned().fold(f64::INFINITY, f64::min);
                let umax = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let vmin = vs.iter().cloned().fold(f64::INFINITY, f64::min);
                let vmax = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if umax < -1.0 || vmax < -1.0 || umin > w as f64 || vmin > h as f64 {
                    continue;
                }
                (
                    (umin.floor() as i64).max(0),
                    (vmin.floor() as i64).max(0),
                    (umax.ceil() as i64).min(w - 1),
                    (vmax.ceil() as i64).min(h - 1),
                )
            } else {
                // straddles the camera plane: test every pixel, the ray test
                // itself rejects hits behind the near plane
                (0, 0, w - 1, h - 1)
            };
            self.stats.faces_drawn += 1;
            let e1 = b - a;
            let e2 = c - a;
            let s = -a;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = k.ray(x as f64, y as f64);
                    let p = d.cross(&e2);
                    let det = e1.dot(&p);
                    if det.abs() < 1e-15 {
                        continue;
                    }
                    let inv = 1.0 / det;
                    let b1 = s.dot(&p) * inv;
                    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&b1) {
                        continue;
                    }
                    let q = s.cross(&e1);
                    let b2 = d.dot(&q) * inv;
                    if b2 < -EDGE_EPS || b1 + b2 > 1.0 + EDGE_EPS {
                        continue;
                    }
                    // d has unit z, so the ray parameter is the depth
                    let t = e2.dot(&q) * inv;
                    if t <= NEAR_PLANE {
                        continue;
                    }
                    let i = (y * w + x) as usize;
                    if t < self.depth[i] {
                        self.depth[i] = t;
                        self.hit[i] = Hit {
                            instance,
                            face: fi as u32,
                            b1,
                            b2,
                        };
                    }
                }
            }
        }
    }
}

/// Joint z-buffer of several posed meshes; instance ids are list positions.
pub fn zbuffer(objects: &[(&TriMesh, Pose)], k: &CameraIntrinsics) -> ZBuffer {
    let mut zb = ZBuffer::new(k);
    for (inst, (mesh, pose)) in objects.iter().enumerate() {
        zb.draw(inst as u32, mesh, pose, k);
    }
    if zb.stats.degenerate_faces_skipped > 0 {
        log::warn!(
            "skipped {} degenerate faces while rasterizing",
            zb.stats.degenerate_faces_skipped
        );
    }
    zb
}

/// Mask, depth, XYZ and region channels for a scene; self-occlusion is
/// left unset (see [`render_frame`]).
pub fn rasterize_scene(objects: &[(&TriMesh, Pose)], k: &CameraIntrinsics) -> (DenseFeatureMaps, ZBuffer) {
    let zb = zbuffer(objects, k);
    let mut maps = DenseFeatureMaps::empty(k.width, k.height);
    for (i, hit) in zb.hit.iter().enumerate() {
        if hit.instance == NO_INSTANCE {
            continue;
        }
        let (mesh, pose) = &objects[hit.instance as usize];
        let [va, vb, vc] = mesh.face_vertices(hit.face as usize);
        let xyz = va * (1.0 - hit.b1 - hit.b2) + vb * hit.b1 + vc * hit.b2;
        maps.mask[i] = true;
        maps.instance[i] = hit.instance;
        // depth from the object point keeps depth == z(pose·xyz) exact
        maps.depth[i] = pose.transform_point(&xyz).z;
        maps.xyz[i] = [xyz.x, xyz.y, xyz.z];
        maps.region[i] = mesh.region_of_face[hit.face as usize];
    }
    (maps, zb)
}

/// Single-object rasterization. An object entirely behind the camera
/// yields an empty mask.
pub fn rasterize(mesh: &TriMesh, pose: &Pose, k: &CameraIntrinsics) -> DenseFeatureMaps {
    rasterize_scene(&[(mesh, *pose)], k).0
}

/// Full feature render of a scene: rasterized channels plus self-occlusion.
pub fn render_frame(objects: &[(&TriMesh, Pose)], k: &CameraIntrinsics) -> (DenseFeatureMaps, ZBuffer) {
    let (mut maps, zb) = rasterize_scene(objects, k);
    let poses: Vec<Pose> = objects.iter().map(|(_, p)| *p).collect();
    let so = self_occlusion_scene(&poses, k, &maps.instance);
    maps.selfocc = so.values;
    maps.selfocc_valid = so.valid;
    (maps, zb)
}

/// Visibility per object from an existing joint z-buffer: pixels won in the
/// joint buffer over pixels covered when rendered alone; 0 when the object
/// is outside the image.
pub fn visibility_from_zbuffer(joint: &ZBuffer, objects: &[(&TriMesh, Pose)], k: &CameraIntrinsics) -> Vec<f64> {
    let mut won = vec![0usize; objects.len()];
    for h in &joint.hit {
        if h.instance != NO_INSTANCE {
            won[h.instance as usize] += 1;
        }
    }
    objects
        .iter()
        .enumerate()
        .map(|(i, (mesh, pose))| {
            let alone = zbuffer(&[(*mesh, *pose)], k);
            let total = alone.instance_count(0);
            if total == 0 {
                0.0
            } else {
                won[i] as f64 / total as f64
            }
        })
        .collect()
}

pub fn compute_visibility(objects: &[(&TriMesh, Pose)], k: &CameraIntrinsics) -> Vec<f64> {
    let joint = zbuffer(objects, k);
    visibility_from_zbuffer(&joint, objects, k)
}
