use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use stereo6d_ffi::*;

const F: f64 = 600.0;
const C: (f64, f64) = (319.5, 239.5);
const B: f64 = 50.0;

fn rig() -> *mut S6dRig {
    let mut rig = ptr::null_mut();
    let st = unsafe { s6d_rig_new_rectified(F, F, C.0, C.1, 640, 480, B, &mut rig) };
    assert_eq!(st, S6dStatus::Ok);
    rig
}

/// Object translated to (10, -5, 800), rotated 0.3 rad about Y.
fn truth(p: [f64; 3]) -> [f64; 3] {
    let (s, c) = 0.3f64.sin_cos();
    [c * p[0] + s * p[2] + 10.0, p[1] - 5.0, -s * p[0] + c * p[2] + 800.0]
}

fn grid() -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            for k in 0..3 {
                pts.push([i as f64 * 15.0 - 30.0, j as f64 * 15.0 - 30.0, k as f64 * 20.0 - 20.0]);
            }
        }
    }
    pts
}

fn filled_set() -> *mut S6dCorrespondences {
    let set = s6d_correspondences_new();
    for p in grid() {
        let q = truth(p);
        for (view, dx) in [(S6dView::Left, 0.0), (S6dView::Right, -B)] {
            let u = F * (q[0] + dx) / q[2] + C.0;
            let v = F * q[1] / q[2] + C.1;
            assert_eq!(unsafe { s6d_correspondences_push(set, view, u, v, p[0], p[1], p[2], 1.0) }, S6dStatus::Ok);
        }
    }
    set
}

/// fB/Z at the rounded left pixel of each fixture point; zero elsewhere.
fn disparity() -> *mut S6dDisparity {
    let (w, h) = (640u32, 480u32);
    let mut vals = vec![0.0; (w * h) as usize];
    for p in grid() {
        let q = truth(p);
        let u = (F * q[0] / q[2] + C.0).round() as usize;
        let v = (F * q[1] / q[2] + C.1).round() as usize;
        vals[v * w as usize + u] = F * B / q[2];
    }
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { s6d_disparity_from_values(w, h, vals.as_ptr(), vals.len(), &mut map) }, S6dStatus::Ok);
    map
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let n = unsafe { s6d_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn every_strategy_recovers_the_fixture_pose() {
    let (rig, set, disp) = (rig(), filled_set(), disparity());
    assert_eq!(unsafe { s6d_correspondences_len(set) }, 150);
    let mut params = s6d_solver_params_default();
    params.inlier_threshold_mm = 5.0;
    for strategy in [
        S6dStrategy::MonoLeft,
        S6dStrategy::LatePoseCombine,
        S6dStrategy::MidJointPnp,
        S6dStrategy::Disparity3d3d,
        S6dStrategy::EarlyJointPnpPlusDepth,
    ] {
        let mut out = std::mem::MaybeUninit::<S6dEstimate>::uninit();
        let st = unsafe { s6d_estimate(strategy, set, rig, disp, &params, out.as_mut_ptr()) };
        assert_eq!(st, S6dStatus::Ok, "{strategy:?}: {}", last_error());
        let est = unsafe { out.assume_init() };
        let t = est.pose.translation;
        // Rounded disparity pixels put the 3D-3D lifts off by a fraction of a pixel.
        let tol = if strategy == S6dStrategy::Disparity3d3d { 5.0 } else { 1e-6 };
        assert!((t[0] - 10.0).abs() < tol && (t[1] + 5.0).abs() < tol && (t[2] - 800.0).abs() < tol, "{strategy:?}: {t:?}");
        assert!(est.converged);
        let r = est.pose.rotation;
        assert!((r[2] - 0.3f64.sin()).abs() < if tol > 1.0 { 1e-2 } else { 1e-9 });
    }
    unsafe {
        s6d_disparity_free(disp);
        s6d_correspondences_free(set);
        s6d_rig_free(rig);
    }
}

#[test]
fn null_handles_are_reported() {
    let mut out = std::mem::MaybeUninit::<S6dEstimate>::uninit();
    let st = unsafe { s6d_estimate(S6dStrategy::MonoLeft, ptr::null(), ptr::null(), ptr::null(), ptr::null(), out.as_mut_ptr()) };
    assert_eq!(st, S6dStatus::NullPointer);
    assert!(last_error().contains("null"));
    let st = unsafe { s6d_rig_new_rectified(F, F, C.0, C.1, 640, 480, B, ptr::null_mut()) };
    assert_eq!(st, S6dStatus::NullPointer);
    unsafe {
        s6d_rig_free(ptr::null_mut());
        s6d_correspondences_free(ptr::null_mut());
        s6d_disparity_free(ptr::null_mut());
    }
    assert_eq!(unsafe { s6d_correspondences_len(ptr::null()) }, 0);
}

#[test]
fn solver_errors_map_to_status_codes() {
    let rig = rig();
    let set = s6d_correspondences_new();
    for i in 0..3 {
        unsafe { s6d_correspondences_push(set, S6dView::Left, 300.0 + i as f64, 200.0, i as f64, 0.0, 0.0, 1.0) };
    }
    let mut out = std::mem::MaybeUninit::<S6dEstimate>::uninit();
    let st = unsafe { s6d_estimate(S6dStrategy::MonoLeft, set, rig, ptr::null(), ptr::null(), out.as_mut_ptr()) };
    assert_eq!(st, S6dStatus::InsufficientData);
    let st = unsafe { s6d_estimate(S6dStrategy::Disparity3d3d, set, rig, ptr::null(), ptr::null(), out.as_mut_ptr()) };
    assert_eq!(st, S6dStatus::Configuration);
    assert!(last_error().to_lowercase().contains("disparity"));
    let st = unsafe { s6d_correspondences_push(set, S6dView::Left, 1.0, 1.0, 0.0, 0.0, 0.0, 1.5) };
    assert_eq!(st, S6dStatus::InvalidArgument);
    let mut bad = ptr::null_mut();
    let st = unsafe { s6d_rig_new_rectified(-1.0, F, C.0, C.1, 640, 480, B, &mut bad) };
    assert_eq!(st, S6dStatus::InvalidArgument);
    assert!(bad.is_null());
    unsafe {
        s6d_correspondences_free(set);
        s6d_rig_free(rig);
    }
}

#[test]
fn error_buffer_truncates_and_reports_full_length() {
    s6d_clear_error();
    assert_eq!(unsafe { s6d_last_error(ptr::null_mut(), 0) }, 0);
    let mut map = ptr::null_mut();
    let st = unsafe { s6d_disparity_from_values(4, 4, [1.0f64; 3].as_ptr(), 3, &mut map) };
    assert_eq!(st, S6dStatus::InvalidArgument);
    let full = unsafe { s6d_last_error(ptr::null_mut(), 0) };
    let mut small = [0x7f as std::ffi::c_char; 8];
    assert_eq!(unsafe { s6d_last_error(small.as_mut_ptr(), small.len()) }, full);
    assert_eq!(small[7], 0);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 7);
}

#[test]
fn block_match_recovers_a_constant_shift() {
    let (w, h, shift) = (96u32, 48u32, 7usize);
    let tex = |x: usize, y: usize| ((x.wrapping_mul(2654435761) ^ y.wrapping_mul(40503)) >> 3) as u8;
    let left: Vec<u8> = (0..h as usize).flat_map(|y| (0..w as usize).map(move |x| tex(x, y))).collect();
    let right: Vec<u8> = (0..h as usize).flat_map(|y| (0..w as usize).map(move |x| tex(x + shift, y))).collect();
    let mut map = ptr::null_mut();
    let st = unsafe { s6d_disparity_block_match(left.as_ptr(), right.as_ptr(), w, h, 16, 5, &mut map) };
    assert_eq!(st, S6dStatus::Ok);
    assert!(unsafe { s6d_disparity_valid_count(map) } > 0);
    let mut d = 0.0;
    assert_eq!(unsafe { s6d_disparity_get(map, 48, 24, &mut d) }, S6dStatus::Ok);
    assert!((d - shift as f64).abs() < 0.5, "{d}");
    assert_eq!(unsafe { s6d_disparity_get(map, w, 0, &mut d) }, S6dStatus::InvalidArgument);
    unsafe { s6d_disparity_free(map) };
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(s6d_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests/<bin> lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn header_compiles_and_links_from_c() {
    if !have_cc() {
        eprintln!("cc not found; skipping");
        return;
    }
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let include = crate_dir.join("include");
    let src = crate_dir.join("tests/c/smoke.c");
    let lib = target_dir().join("libstereo6d_ffi.a");
    let tmp = std::env::temp_dir().join(format!("s6d_smoke_{}", std::process::id()));
    if !lib.exists() {
        let st = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-I"]).arg(&include).arg(&src).status().unwrap();
        assert!(st.success());
        return;
    }
    let st = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&tmp)
        .status()
        .unwrap();
    assert!(st.success());
    let out = Command::new(&tmp).output().unwrap();
    let _ = std::fs::remove_file(&tmp);
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("disparity"));
}
