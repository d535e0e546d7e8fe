//! Pinhole camera math, rigid transforms, stereo rigs and pixel boxes.
//!
//! Conventions: right-handed camera frame with +Z forward, +X right and
//! +Y down (the BOP convention). Lengths are millimeters, image
//! coordinates are pixels, and pixel `(i, j)` has its center at `(i, j)`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating orthonormality of rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid depth {0} mm, must be positive")]
    InvalidDepth(f64),
    #[error("invalid disparity/depth value {0}, must be positive")]
    InvalidDisparity(f64),
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid stereo rig: {0}")]
    InvalidRig(String),
    #[error("invalid bounding box ({0}, {1}, {2}, {3})")]
    InvalidBox(i32, i32, i32, i32),
}

/// Rigid transform mapping object-frame points into a camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    /// Millimeters.
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose after checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidRotation(
                "non-finite translation".to_string(),
            ));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Re-orthonormalizes the rotation (polar projection via SVD).
    pub fn orthonormalized(&self) -> Pose {
        Pose {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

/// Frobenius norm of `RᵀR − I` and `|det R − 1|`, whichever is larger.
pub fn rotation_defect(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    ortho.max((r.determinant() - 1.0).abs())
}

pub fn check_rotation(r: &Matrix3<f64>) -> Result<(), GeometryError> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::InvalidRotation("non-finite entries".into()));
    }
    let defect = rotation_defect(r);
    if defect > ROTATION_TOLERANCE {
        return Err(GeometryError::InvalidRotation(format!(
            "orthonormality defect {defect:e}"
        )));
    }
    Ok(())
}

/// Closest rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), angle).into_inner()
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), angle).into_inner()
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner()
}

/// Skew-symmetric cross-product matrix.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Geodesic distance on SO(3) in radians, in `[0, π]`.
pub fn rotation_geodesic(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> Result<f64, GeometryError> {
    check_rotation(ra)?;
    check_rotation(rb)?;
    let c = ((ra.transpose() * rb).trace() - 1.0) / 2.0;
    Ok(c.clamp(-1.0, 1.0).acos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Row-major 3×3 calibration matrix, the BOP `cam_K` layout.
    pub fn k_row_major(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }

    pub fn from_k_row_major(k: &[f64], width: u32, height: u32) -> Result<Self, GeometryError> {
        if k.len() != 9 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cam_K needs 9 entries, got {}",
                k.len()
            )));
        }
        Self::new(k[0], k[4], k[2], k[5], width, height)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }

    /// Unnormalized ray direction with unit z through image point `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn scaled(&self, factor: u32) -> CameraIntrinsics {
        let s = factor as f64;
        // pixel centers sit on integer coordinates, so the principal point
        // shifts by (s-1)/2 when a pixel is split into s×s sub-pixels
        CameraIntrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s + (s - 1.0) / 2.0,
            cy: self.cy * s + (s - 1.0) / 2.0,
            width: self.width * factor,
            height: self.height * factor,
        }
    }
}

pub fn project(point: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Vector2<f64>, GeometryError> {
    if !(point.z > 0.0) {
        return Err(GeometryError::BehindCamera(point.z));
    }
    Ok(Vector2::new(
        k.fx * point.x / point.z + k.cx,
        k.fy * point.y / point.z + k.cy,
    ))
}

pub fn backproject(
    pixel: &Vector2<f64>,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(GeometryError::InvalidDepth(depth));
    }
    Ok(k.ray(pixel.x, pixel.y) * depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisparityDirection {
    DepthToDisparity,
    DisparityToDepth,
}

/// `d = f·B/Z` and `Z = f·B/d`; the same formula in both directions.
pub fn disparity_depth(
    value: f64,
    focal_px: f64,
    baseline_mm: f64,
    _direction: DisparityDirection,
) -> Result<f64, GeometryError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(GeometryError::InvalidDisparity(value));
    }
    if !(focal_px > 0.0 && baseline_mm > 0.0) {
        return Err(GeometryError::InvalidRig(format!(
            "focal {focal_px} px and baseline {baseline_mm} mm must be positive"
        )));
    }
    Ok(focal_px * baseline_mm / value)
}

pub fn depth_to_disparity(depth_mm: f64, focal_px: f64, baseline_mm: f64) -> Result<f64, GeometryError> {
    disparity_depth(depth_mm, focal_px, baseline_mm, DisparityDirection::DepthToDisparity)
}

pub fn disparity_to_depth(disparity_px: f64, focal_px: f64, baseline_mm: f64) -> Result<f64, GeometryError> {
    disparity_depth(disparity_px, focal_px, baseline_mm, DisparityDirection::DisparityToDepth)
}

/// Two pinhole cameras and the rigid transform from the left camera frame
/// to the right camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub extrinsic_l2r: Pose,
    pub rectified: bool,
}

impl StereoRig {
    /// Rectified rig: identical intrinsics, right camera displaced by `B`
    /// along +X, so left-frame points map to `X − B` in the right frame.
    pub fn rectified(k: CameraIntrinsics, baseline_mm: f64) -> Result<Self, GeometryError> {
        let rig = StereoRig {
            left: k,
            right: k,
            extrinsic_l2r: Pose {
                rotation: Matrix3::identity(),
                translation: Vector3::new(-baseline_mm, 0.0, 0.0),
            },
            rectified: true,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn general(
        left: CameraIntrinsics,
        right: CameraIntrinsics,
        extrinsic_l2r: Pose,
    ) -> Result<Self, GeometryError> {
        let mut rig = StereoRig {
            left,
            right,
            extrinsic_l2r,
            rectified: false,
        };
        rig.rectified = rig.looks_rectified();
        rig.validate()?;
        Ok(rig)
    }

    pub fn baseline(&self) -> f64 {
        self.extrinsic_l2r.translation.norm()
    }

    fn looks_rectified(&self) -> bool {
        let e = &self.extrinsic_l2r;
        (e.rotation - Matrix3::identity()).abs().max() <= 1e-6
            && e.translation.y.abs() <= 1e-6
            && e.translation.z.abs() <= 1e-6
            && e.translation.x < 0.0
            && (self.left.fy - self.right.fy).abs() <= 1e-6
            && (self.left.cy - self.right.cy).abs() <= 1e-6
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.left.validate()?;
        self.right.validate()?;
        check_rotation(&self.extrinsic_l2r.rotation)?;
        if !(self.baseline() > 0.0) {
            return Err(GeometryError::InvalidRig("baseline must be positive".into()));
        }
        if self.rectified != self.looks_rectified() {
            return Err(GeometryError::InvalidRig(format!(
                "rectified flag {} does not match extrinsic {:?}",
                self.rectified, self.extrinsic_l2r.translation
            )));
        }
        Ok(())
    }

    pub fn require_rectified(&self) -> Result<(), GeometryError> {
        if self.rectified {
            Ok(())
        } else {
            Err(GeometryError::InvalidRig(
                "operation requires a rectified rig".into(),
            ))
        }
    }

    /// Object→right-camera pose for an object→left-camera pose.
    pub fn to_right(&self, pose_left: &Pose) -> Pose {
        self.extrinsic_l2r.compose(pose_left)
    }

    /// Object→left-camera pose for an object→right-camera pose.
    pub fn to_left(&self, pose_right: &Pose) -> Pose {
        self.extrinsic_l2r.inverse().compose(pose_right)
    }
}

/// Half-open pixel box `[x_min, x_max) × [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: i32,
    pub y_min: i32,
    pub x_max: i32,
    pub y_max: i32,
}

impl BoundingBox {
    pub fn new(x_min: i32, y_min: i32, x_max: i32, y_max: i32) -> Result<Self, GeometryError> {
        if x_min < x_max && y_min < y_max {
            Ok(BoundingBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max))
        }
    }

    /// BOP `[x, y, w, h]`.
    pub fn from_xywh(xywh: [i32; 4]) -> Result<Self, GeometryError> {
        Self::new(xywh[0], xywh[1], xywh[0] + xywh[2], xywh[1] + xywh[3])
    }

    pub fn to_xywh(&self) -> [i32; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn width(&self) -> i32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i32 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Smallest box containing both inputs. Crop both views with the result so
/// that image rows stay aligned for stereo matching.
pub fn unify_bboxes(left: &BoundingBox, right: &BoundingBox) -> BoundingBox {
    BoundingBox {
        x_min: left.x_min.min(right.x_min),
        y_min: left.y_min.min(right.y_min),
        x_max: left.x_max.max(right.x_max),
        y_max: left.y_max.max(right.y_max),
    }
}
