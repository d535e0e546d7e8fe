use nalgebra::Vector3;

use super::NO_INSTANCE;
use crate::geometry::{CameraIntrinsics, Pose};

/// A ray counts as parallel to a plane when |unit ray · normal| is below this.
pub const PARALLEL_EPS: f64 = 1e-9;

/// Six-layer self-occlusion maps: for each foreground pixel, where its
/// camera ray (expressed in the object frame) crosses the planes X=0, Y=0
/// and Z=0. Intersections are stored raw, including ones behind the
/// camera; only parallel rays are flagged invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfOcclusion {
    pub values: Vec<[f64; 6]>,
    pub valid: Vec<[bool; 3]>,
}

/// Ray origin and unit direction in the object frame for pixel `(x, y)`.
pub fn object_frame_ray(pose: &Pose, k: &CameraIntrinsics, x: f64, y: f64) -> (Vector3<f64>, Vector3<f64>) {
    let rt = pose.rotation.transpose();
    let origin = -(rt * pose.translation);
    let dir = (rt * k.ray(x, y)).normalize();
    (origin, dir)
}

fn intersect(origin: &Vector3<f64>, dir: &Vector3<f64>) -> ([f64; 6], [bool; 3]) {
    let mut values = [0.0; 6];
    let mut valid = [false; 3];
    for axis in 0..3 {
        if dir[axis].abs() < PARALLEL_EPS {
            continue;
        }
        let s = -origin[axis] / dir[axis];
        let p = origin + dir * s;
        let (a, b) = match axis {
            0 => (p.y, p.z),
            1 => (p.x, p.z),
            _ => (p.x, p.y),
        };
        values[2 * axis] = a;
        values[2 * axis + 1] = b;
        valid[axis] = true;
    }
    (values, valid)
}

pub fn self_occlusion_maps(pose: &Pose, k: &CameraIntrinsics, mask: &[bool]) -> SelfOcclusion {
    let instance: Vec<u32> = mask.iter().map(|&m| if m { 0 } else { NO_INSTANCE }).collect();
    self_occlusion_scene(std::slice::from_ref(pose), k, &instance)
}

/// Self-occlusion for a multi-object frame; each pixel uses the pose of the
/// instance that owns it.
pub fn self_occlusion_scene(poses: &[Pose], k: &CameraIntrinsics, instance: &[u32]) -> SelfOcclusion {
    let w = k.width as usize;
    let mut values = vec![[0.0; 6]; instance.len()];
    let mut valid = vec![[false; 3]; instance.len()];
    for (i, &inst) in instance.iter().enumerate() {
        if inst == NO_INSTANCE {
            continue;
        }
        let (origin, dir) = object_frame_ray(&poses[inst as usize], k, (i % w) as f64, (i / w) as f64);
        let (v, f) = intersect(&origin, &dir);
        values[i] = v;
        valid[i] = f;
    }
    SelfOcclusion { values, valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot_x;
    use nalgebra::Matrix3;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn ray_through_origin_gives_zeros() {
        let pose = Pose {
            rotation: rot_x(0.3),
            translation: Vector3::new(0.0, 0.0, 600.0),
        };
        let mut mask = vec![false; 640 * 480];
        mask[240 * 640 + 320] = true;
        let so = self_occlusion_maps(&pose, &k(), &mask);
        let v = so.values[240 * 640 + 320];
        // X=0 is parallel to the principal ray here, the other two pass through the origin
        assert_eq!(so.valid[240 * 640 + 320], [false, true, true]);
        for c in &v[2..] {
            assert!(c.abs() < 1e-9, "{v:?}");
        }
    }

    #[test]
    fn parallel_plane_is_flagged() {
        let pose = Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::new(10.0, 20.0, 600.0),
        };
        let mut mask = vec![false; 640 * 480];
        let i = 240 * 640 + 320;
        mask[i] = true;
        let so = self_occlusion_maps(&pose, &k(), &mask);
        // principal ray is (0,0,1): parallel to X=0 and Y=0
        assert_eq!(so.valid[i], [false, false, true]);
        assert!((so.values[i][4] + 10.0).abs() < 1e-9);
        assert!((so.values[i][5] + 20.0).abs() < 1e-9);
        // background untouched
        assert_eq!(so.valid[0], [false; 3]);
    }
}
