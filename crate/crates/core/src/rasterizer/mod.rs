//! Software rendering of triangle meshes into dense ground-truth features:
//! mask, depth, object coordinates (XYZ), surface regions, self-occlusion
//! plane intersections and per-object visibility.

mod mesh;
mod regions;
mod render;
mod selfocc;

pub use mesh::{max_pairwise_distance, ShapeSpec, TriMesh, MIN_FACE_AREA};
pub use regions::{assign_regions, farthest_point_sampling, region_partition, DEFAULT_REGION_COUNT};
pub use render::{
    compute_visibility, rasterize, rasterize_scene, render_frame, visibility_from_zbuffer, zbuffer,
    Hit, RenderStats, ZBuffer,
};
pub use selfocc::{self_occlusion_maps, self_occlusion_scene, SelfOcclusion, PARALLEL_EPS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid region request: {0}")]
    InvalidRegions(String),
    #[error("inconsistent feature maps: {0}")]
    Inconsistent(String),
}

/// Sentinel instance id for background pixels.
pub const NO_INSTANCE: u32 = u32::MAX;
/// Sentinel region id for background pixels.
pub const NO_REGION: u32 = u32::MAX;

/// Per-pixel ground-truth features for one view, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFeatureMaps {
    pub width: u32,
    pub height: u32,
    pub mask: Vec<bool>,
    /// Index of the object that owns the pixel, [`NO_INSTANCE`] on background.
    pub instance: Vec<u32>,
    /// Millimeters, 0 on background.
    pub depth: Vec<f64>,
    /// Object-frame coordinates (mm) of the visible surface point.
    pub xyz: Vec<[f64; 3]>,
    pub region: Vec<u32>,
    /// Ray/plane intersections `(y,z)` on X=0, `(x,z)` on Y=0, `(x,y)` on Z=0.
    pub selfocc: Vec<[f64; 6]>,
    pub selfocc_valid: Vec<[bool; 3]>,
    /// Pixels; non-positive values mean "no disparity".
    pub disparity: Option<Vec<f64>>,
}

impl DenseFeatureMaps {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        DenseFeatureMaps {
            width,
            height,
            mask: vec![false; n],
            instance: vec![NO_INSTANCE; n],
            depth: vec![0.0; n],
            xyz: vec![[0.0; 3]; n],
            region: vec![NO_REGION; n],
            selfocc: vec![[0.0; 6]; n],
            selfocc_valid: vec![[false; 3]; n],
            disparity: None,
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn instance_pixel_count(&self, instance: u32) -> usize {
        self.instance.iter().filter(|&&i| i == instance).count()
    }

    /// Checks channel sizes and the mask/depth/instance coupling.
    pub fn validate(&self) -> Result<(), RasterError> {
        let n = self.width as usize * self.height as usize;
        let sizes = [
            ("mask", self.mask.len()),
            ("instance", self.instance.len()),
            ("depth", self.depth.len()),
            ("xyz", self.xyz.len()),
            ("region", self.region.len()),
            ("selfocc", self.selfocc.len()),
            ("selfocc_valid", self.selfocc_valid.len()),
        ];
        for (name, len) in sizes {
            if len != n {
                return Err(RasterError::Inconsistent(format!(
                    "channel {name} has {len} entries, expected {n}"
                )));
            }
        }
        if let Some(d) = &self.disparity {
            if d.len() != n {
                return Err(RasterError::Inconsistent(format!(
                    "disparity has {} entries, expected {n}",
                    d.len()
                )));
            }
        }
        for i in 0..n {
            let fg = self.mask[i];
            if fg != (self.depth[i] > 0.0) || fg != (self.instance[i] != NO_INSTANCE) {
                return Err(RasterError::Inconsistent(format!(
                    "pixel {i}: mask {fg}, depth {}, instance {}",
                    self.depth[i], self.instance[i]
                )));
            }
        }
        Ok(())
    }

    /// Keeps only the pixels owned by `instance`.
    pub fn isolate(&self, instance: u32) -> DenseFeatureMaps {
        let mut out = self.clone();
        for i in 0..out.len() {
            if out.instance[i] != instance {
                out.mask[i] = false;
                out.instance[i] = NO_INSTANCE;
                out.depth[i] = 0.0;
                out.xyz[i] = [0.0; 3];
                out.region[i] = NO_REGION;
                out.selfocc[i] = [0.0; 6];
                out.selfocc_valid[i] = [false; 3];
                if let Some(d) = out.disparity.as_mut() {
                    d[i] = 0.0;
                }
            }
        }
        out
    }
}
