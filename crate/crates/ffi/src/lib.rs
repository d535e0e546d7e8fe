//! C ABI over the stereo6d pose solvers.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns an [`S6dStatus`]
//! and leaves a message for [`s6d_last_error`] on failure. Errors are kept
//! per thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{Vector2, Vector3};
use stereo6d::geometry::{CameraIntrinsics, StereoRig};
use stereo6d::posesolve::{
    estimate, Correspondence, CorrespondenceSet, FrameInputs, FusionStrategy, PoseEstimate, SolveError, SolverParams,
    View,
};
use stereo6d::stereomatch::{block_match, DisparityMap, GrayImage, StereoError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S6dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientData = 3,
    Degenerate = 4,
    NumericFailure = 5,
    Configuration = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S6dView {
    Left = 0,
    Right = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S6dStrategy {
    MonoLeft = 0,
    LatePoseCombine = 1,
    MidJointPnp = 2,
    Disparity3d3d = 3,
    EarlyJointPnpPlusDepth = 4,
}

impl From<S6dStrategy> for FusionStrategy {
    fn from(s: S6dStrategy) -> Self {
        match s {
            S6dStrategy::MonoLeft => FusionStrategy::MonoLeft,
            S6dStrategy::LatePoseCombine => FusionStrategy::LatePoseCombine,
            S6dStrategy::MidJointPnp => FusionStrategy::MidJointPnp,
            S6dStrategy::Disparity3d3d => FusionStrategy::Disparity3d3d,
            S6dStrategy::EarlyJointPnpPlusDepth => FusionStrategy::EarlyJointPnpPlusDepth,
        }
    }
}

/// Object → left camera. Rotation is row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S6dPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S6dSolverParams {
    pub ransac_threshold_px: f64,
    pub ransac_confidence: f64,
    pub max_iterations: usize,
    pub refine_iterations: usize,
    pub inlier_threshold_mm: f64,
    pub depth_weight: f64,
    pub seed: u64,
}

impl From<SolverParams> for S6dSolverParams {
    fn from(p: SolverParams) -> Self {
        S6dSolverParams {
            ransac_threshold_px: p.ransac_threshold_px,
            ransac_confidence: p.ransac_confidence,
            max_iterations: p.max_iterations,
            refine_iterations: p.refine_iterations,
            inlier_threshold_mm: p.inlier_threshold_mm,
            depth_weight: p.depth_weight,
            seed: p.seed,
        }
    }
}

impl From<S6dSolverParams> for SolverParams {
    fn from(p: S6dSolverParams) -> Self {
        SolverParams {
            ransac_threshold_px: p.ransac_threshold_px,
            ransac_confidence: p.ransac_confidence,
            max_iterations: p.max_iterations,
            refine_iterations: p.refine_iterations,
            inlier_threshold_mm: p.inlier_threshold_mm,
            depth_weight: p.depth_weight,
            seed: p.seed,
        }
    }
}

/// Absent diagnostics are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S6dEstimate {
    pub pose: S6dPose,
    pub inlier_count: usize,
    pub correspondence_count: usize,
    pub inlier_ratio: f64,
    pub reprojection_px: f64,
    pub residual_mm: f64,
    pub converged: bool,
    pub fallback: bool,
}

impl From<&PoseEstimate> for S6dEstimate {
    fn from(e: &PoseEstimate) -> Self {
        let r = e.pose.rotation;
        let t = e.pose.translation;
        S6dEstimate {
            pose: S6dPose {
                rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
                translation: [t.x, t.y, t.z],
            },
            inlier_count: e.inlier_count,
            correspondence_count: e.correspondence_count,
            inlier_ratio: e.inlier_ratio,
            reprojection_px: e.mean_reprojection_px().unwrap_or(f64::NAN),
            residual_mm: e.residual_mm.unwrap_or(f64::NAN),
            converged: e.converged,
            fallback: e.fallback,
        }
    }
}

pub struct S6dRig(StereoRig);

pub struct S6dCorrespondences(CorrespondenceSet);

pub struct S6dDisparity(DisparityMap);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(S6dStatus, String);

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        let status = match e {
            SolveError::InsufficientData { .. } => S6dStatus::InsufficientData,
            SolveError::DegenerateConfiguration(_) => S6dStatus::Degenerate,
            SolveError::Numeric(_) => S6dStatus::NumericFailure,
            SolveError::Configuration(_) => S6dStatus::Configuration,
            SolveError::InvalidInput(_) | SolveError::Geometry(_) => S6dStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<StereoError> for Failure {
    fn from(e: StereoError) -> Self {
        Failure(S6dStatus::InvalidArgument, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(S6dStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(S6dStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> S6dStatus {
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err(Failure(S6dStatus::Panic, "internal panic".into())));
    match result {
        Ok(()) => S6dStatus::Ok,
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `capacity`. Returns the length the
/// full message needs including the terminator; 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn s6d_last_error(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if msg.is_empty() {
            return 0;
        }
        if !buf.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

#[no_mangle]
pub extern "C" fn s6d_clear_error() {
    LAST_ERROR.with(|e| e.borrow_mut().clear());
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn s6d_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!(),
    };
    VERSION.as_ptr()
}

/// Rectified rig with shared intrinsics and baseline along +X (mm).
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn s6d_rig_new_rectified(
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    baseline_mm: f64,
    out: *mut *mut S6dRig,
) -> S6dStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let k = CameraIntrinsics::new(fx, fy, cx, cy, width, height).map_err(|e| invalid(e.to_string()))?;
        let rig = StereoRig::rectified(k, baseline_mm).map_err(|e| invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(S6dRig(rig)));
        Ok(())
    })
}

/// # Safety
/// `rig` must be null or come from `s6d_rig_new_rectified`, freed once.
#[no_mangle]
pub unsafe extern "C" fn s6d_rig_free(rig: *mut S6dRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

#[no_mangle]
pub extern "C" fn s6d_correspondences_new() -> *mut S6dCorrespondences {
    Box::into_raw(Box::new(S6dCorrespondences(CorrespondenceSet::new())))
}

/// Adds one pixel ↔ object-point pair. Weight must lie in [0, 1].
///
/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn s6d_correspondences_push(
    set: *mut S6dCorrespondences,
    view: S6dView,
    u: f64,
    v: f64,
    x: f64,
    y: f64,
    z: f64,
    weight: f64,
) -> S6dStatus {
    guard(|| {
        let set = out_ptr(set, "set")?;
        let view = match view {
            S6dView::Left => View::Left,
            S6dView::Right => View::Right,
        };
        let mut c = Correspondence::new(Vector2::new(u, v), Vector3::new(x, y, z), view);
        c.weight = weight;
        set.0.push(c)?;
        Ok(())
    })
}

/// # Safety
/// `set` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn s6d_correspondences_len(set: *const S6dCorrespondences) -> usize {
    set.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `set` must be null or come from `s6d_correspondences_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn s6d_correspondences_free(set: *mut S6dCorrespondences) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Disparity map from a row-major array of `width * height` values in px;
/// values ≤ 0 or non-finite are invalid.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn s6d_disparity_from_values(
    width: u32,
    height: u32,
    values: *const f64,
    len: usize,
    out: *mut *mut S6dDisparity,
) -> S6dStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if values.is_null() {
            return Err(null("values"));
        }
        if len != width as usize * height as usize {
            return Err(invalid(format!("expected {} values for {width}x{height}, got {len}", width as usize * height as usize)));
        }
        let vals: Vec<f64> = std::slice::from_raw_parts(values, len)
            .iter()
            .map(|&v| if v.is_finite() { v } else { 0.0 })
            .collect();
        *out = Box::into_raw(Box::new(S6dDisparity(DisparityMap::from_channel(width, height, &vals))));
        Ok(())
    })
}

/// Left-referenced SAD block matching on 8-bit grayscale images.
///
/// # Safety
/// `left` and `right` must each point to `width * height` readable bytes;
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn s6d_disparity_block_match(
    left: *const u8,
    right: *const u8,
    width: u32,
    height: u32,
    max_disparity: u32,
    window: u32,
    out: *mut *mut S6dDisparity,
) -> S6dStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if left.is_null() || right.is_null() {
            return Err(null("image"));
        }
        let n = width as usize * height as usize;
        let l = GrayImage::new(width, height, std::slice::from_raw_parts(left, n).to_vec())?;
        let r = GrayImage::new(width, height, std::slice::from_raw_parts(right, n).to_vec())?;
        *out = Box::into_raw(Box::new(S6dDisparity(block_match(&l, &r, max_disparity, window)?)));
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn s6d_disparity_valid_count(map: *const S6dDisparity) -> usize {
    map.as_ref().map_or(0, |m| m.0.valid_count())
}

/// # Safety
/// `map` must be null or a live handle; the pixel must be inside the map.
#[no_mangle]
pub unsafe extern "C" fn s6d_disparity_get(map: *const S6dDisparity, x: u32, y: u32, out: *mut f64) -> S6dStatus {
    guard(|| {
        let map = in_ref(map, "map")?;
        let out = out_ptr(out, "out")?;
        if x >= map.0.width || y >= map.0.height {
            return Err(invalid(format!("pixel ({x}, {y}) outside {}x{}", map.0.width, map.0.height)));
        }
        *out = map.0.get(x as i64, y as i64).unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `map` must be null or come from a constructor above, freed once.
#[no_mangle]
pub unsafe extern "C" fn s6d_disparity_free(map: *mut S6dDisparity) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

#[no_mangle]
pub extern "C" fn s6d_solver_params_default() -> S6dSolverParams {
    SolverParams::default().into()
}

/// Solves the object pose in the left camera frame. `disparity` may be null
/// for strategies that do not lift points; `params` may be null for
/// defaults.
///
/// # Safety
/// Handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn s6d_estimate(
    strategy: S6dStrategy,
    set: *const S6dCorrespondences,
    rig: *const S6dRig,
    disparity: *const S6dDisparity,
    params: *const S6dSolverParams,
    out: *mut S6dEstimate,
) -> S6dStatus {
    guard(|| {
        let set = in_ref(set, "set")?;
        let rig = in_ref(rig, "rig")?;
        let out = out_ptr(out, "out")?;
        let params: SolverParams = params.as_ref().map_or_else(SolverParams::default, |p| (*p).into());
        let inputs = FrameInputs {
            correspondences: &set.0,
            rig: &rig.0,
            disparity: disparity.as_ref().map(|d| &d.0),
        };
        let est = estimate(strategy.into(), &inputs, &params)?;
        *out = S6dEstimate::from(&est);
        Ok(())
    })
}
