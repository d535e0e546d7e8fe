//! Classical disparity estimation and ground-truth disparity synthesis.
//!
//! Disparity convention: left pixel `x` corresponds to right pixel `x − d`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, StereoRig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StereoError {
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
    #[error("invalid matching window {window} for image width {width}")]
    InvalidWindow { window: u32, width: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, StereoError> {
        if data.len() != width as usize * height as usize {
            return Err(StereoError::InvalidParameter(format!(
                "{} bytes for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    /// ITU-R BT.601 luma from interleaved RGB.
    pub fn from_rgb(width: u32, height: u32, rgb: &[u8]) -> Result<Self, StereoError> {
        if rgb.len() != 3 * width as usize * height as usize {
            return Err(StereoError::InvalidParameter(format!(
                "{} bytes for a {width}x{height} RGB image",
                rgb.len()
            )));
        }
        let data = rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round() as u8)
            .collect();
        Ok(GrayImage { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width as usize + x]
    }

    pub fn mirrored(&self) -> GrayImage {
        let w = self.width as usize;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(w) {
            data.extend(row.iter().rev());
        }
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Per-pixel disparity (px) with validity and a confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub confidence: Vec<f64>,
}

impl DisparityMap {
    pub fn invalid(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        DisparityMap {
            width,
            height,
            values: vec![0.0; n],
            valid: vec![false; n],
            confidence: vec![0.0; n],
        }
    }

    pub fn get(&self, x: i64, y: i64) -> Option<f64> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let i = y as usize * self.width as usize + x as usize;
        self.valid[i].then_some(self.values[i])
    }

    /// Disparity at the pixel nearest to `(u, v)`.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        self.get(u.round() as i64, v.round() as i64)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn mirrored(&self) -> DisparityMap {
        let w = self.width as usize;
        let flip = |v: &Vec<f64>| -> Vec<f64> { v.chunks_exact(w).flat_map(|r| r.iter().rev().cloned()).collect() };
        DisparityMap {
            width: self.width,
            height: self.height,
            values: flip(&self.values),
            valid: self.valid.chunks_exact(w).flat_map(|r| r.iter().rev().cloned()).collect(),
            confidence: flip(&self.confidence),
        }
    }

    /// Stores the map as a dense channel; invalid pixels become 0.
    pub fn to_channel(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| if ok { v } else { 0.0 })
            .collect()
    }

    pub fn from_channel(width: u32, height: u32, values: &[f64]) -> Self {
        let valid: Vec<bool> = values.iter().map(|&v| v > 0.0).collect();
        DisparityMap {
            width,
            height,
            values: values.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            confidence: valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
            valid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockMatchParams {
    pub max_disparity: u32,
    /// Odd side length of the square SAD window.
    pub window: u32,
    /// Left-right consistency tolerance (px).
    pub lr_threshold: f64,
    /// Pixels whose cost margin falls below this are invalid.
    pub min_confidence: f64,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        BlockMatchParams {
            max_disparity: 128,
            window: 9,
            lr_threshold: 1.0,
            min_confidence: 0.02,
        }
    }
}

const NO_COST: u32 = u32::MAX;

struct WinnerRow {
    value: Vec<f64>,
    confidence: Vec<f64>,
    found: Vec<bool>,
}

/// Winner-take-all with parabolic refinement over one row of costs.
/// `cost(x, d)` returns `NO_COST` for unavailable candidates.
fn winners(width: usize, max_d: usize, cost: impl Fn(usize, usize) -> u32) -> WinnerRow {
    let mut row = WinnerRow {
        value: vec![0.0; width],
        confidence: vec![0.0; width],
        found: vec![false; width],
    };
    for x in 0..width {
        let mut best = (NO_COST, 0usize);
        for d in 0..=max_d {
            let c = cost(x, d);
            if c < best.0 {
                best = (c, d);
            }
        }
        if best.0 == NO_COST {
            continue;
        }
        let (c1, d1) = best;
        let mut c2 = NO_COST;
        for d in 0..=max_d {
            if d + 1 >= d1 && d <= d1 + 1 {
                continue;
            }
            c2 = c2.min(cost(x, d));
        }
        let mut sub = 0.0;
        if d1 > 0 {
            let (cm, cp) = (cost(x, d1 - 1), cost(x, d1 + 1));
            if cm != NO_COST && cp != NO_COST && d1 < max_d {
                let denom = cm as f64 - 2.0 * c1 as f64 + cp as f64;
                if denom > 0.0 {
                    sub = ((cm as f64 - cp as f64) / (2.0 * denom)).clamp(-0.5, 0.5);
                }
            }
        }
        row.value[x] = d1 as f64 + sub;
        row.confidence[x] = if c2 == NO_COST || c2 == 0 {
            0.0
        } else {
            (c2 - c1) as f64 / c2 as f64
        };
        row.found[x] = true;
    }
    row
}

/// SAD block matching returning the left- and right-referenced maps, both
/// after the left-right consistency check.
pub fn block_match_pair(
    left: &GrayImage,
    right: &GrayImage,
    params: &BlockMatchParams,
) -> Result<(DisparityMap, DisparityMap), StereoError> {
    if left.width != right.width || left.height != right.height {
        return Err(StereoError::SizeMismatch(left.width, left.height, right.width, right.height));
    }
    let window = params.window;
    if window == 0 || window.is_multiple_of(2) || window >= left.width || window >= left.height {
        return Err(StereoError::InvalidWindow {
            window,
            width: left.width,
        });
    }
    if !(params.lr_threshold >= 0.0) {
        return Err(StereoError::InvalidParameter("lr_threshold must be non-negative".into()));
    }
    let (w, h) = (left.width as usize, left.height as usize);
    let half = (window / 2) as usize;
    let max_d = (params.max_disparity as usize).min(w.saturating_sub(2 * half + 1));
    let dn = max_d + 1;

    let rows: Vec<(WinnerRow, WinnerRow)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut cost = vec![NO_COST; w * dn];
            if y >= half && y + half < h {
                let mut col = vec![0u32; w];
                for d in 0..dn {
                    // column sums of |L(x) − R(x−d)| over the window rows
                    for x in d..w {
                        let mut s = 0u32;
                        for yy in y - half..=y + half {
                            s += (left.get(x, yy) as i32 - right.get(x - d, yy) as i32).unsigned_abs();
                        }
                        col[x] = s;
                    }
                    let lo = half + d;
                    if lo + half >= w {
                        continue;
                    }
                    let mut acc: u32 = col[lo - half..=lo + half].iter().sum();
                    cost[lo * dn + d] = acc;
                    for x in lo + 1..w - half {
                        acc = acc + col[x + half] - col[x - half - 1];
                        cost[x * dn + d] = acc;
                    }
                }
            }
            let left_row = winners(w, max_d, |x, d| if d < dn { cost[x * dn + d] } else { NO_COST });
            let right_row = winners(w, max_d, |xr, d| {
                if d < dn && xr + d < w {
                    cost[(xr + d) * dn + d]
                } else {
                    NO_COST
                }
            });
            (left_row, right_row)
        })
        .collect();

    let mut lmap = DisparityMap::invalid(left.width, left.height);
    let mut rmap = DisparityMap::invalid(left.width, left.height);
    for (y, (lrow, rrow)) in rows.iter().enumerate() {
        for x in 0..w {
            let i = y * w + x;
            if lrow.found[x] {
                lmap.confidence[i] = lrow.confidence[x];
                let xr = (x as f64 - lrow.value[x]).round();
                let consistent = xr >= 0.0
                    && (xr as usize) < w
                    && rrow.found[xr as usize]
                    && (rrow.value[xr as usize] - lrow.value[x]).abs() <= params.lr_threshold;
                if consistent && lrow.confidence[x] >= params.min_confidence {
                    lmap.values[i] = lrow.value[x];
                    lmap.valid[i] = true;
                }
            }
            if rrow.found[x] {
                rmap.confidence[i] = rrow.confidence[x];
                // mirror of the left check: round half toward the image center
                // the same way after flipping, so use the reflected rounding
                let target = x as f64 + rrow.value[x];
                let xl = -((-target).round());
                let consistent = xl < w as f64
                    && lrow.found[xl as usize]
                    && (lrow.value[xl as usize] - rrow.value[x]).abs() <= params.lr_threshold;
                if consistent && rrow.confidence[x] >= params.min_confidence {
                    rmap.values[i] = rrow.value[x];
                    rmap.valid[i] = true;
                }
            }
        }
    }
    Ok((lmap, rmap))
}

/// Left-referenced SAD block matching with default consistency settings.
pub fn block_match(left: &GrayImage, right: &GrayImage, max_disp: u32, window: u32) -> Result<DisparityMap, StereoError> {
    let params = BlockMatchParams {
        max_disparity: max_disp,
        window,
        ..Default::default()
    };
    Ok(block_match_pair(left, right, &params)?.0)
}

/// Ground-truth disparity `f·B/Z` on foreground pixels (depth > 0) plus
/// seeded Gaussian noise of standard deviation `noise_sigma` px.
pub fn disparity_from_depth(
    depth: &[f64],
    width: u32,
    height: u32,
    rig: &StereoRig,
    noise_sigma: f64,
    seed: u64,
) -> Result<DisparityMap, StereoError> {
    rig.require_rectified()?;
    if depth.len() != width as usize * height as usize {
        return Err(StereoError::InvalidParameter(format!(
            "{} depth values for {width}x{height}",
            depth.len()
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(StereoError::InvalidParameter(format!("noise sigma {noise_sigma}")));
    }
    let fb = rig.left.fx * rig.baseline();
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| StereoError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = DisparityMap::invalid(width, height);
    for (i, &z) in depth.iter().enumerate() {
        if !(z > 0.0) {
            continue;
        }
        let noise = if noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        let d = fb / z + noise;
        if d > 0.0 {
            map.values[i] = d;
            map.valid[i] = true;
            map.confidence[i] = 1.0;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{disparity_to_depth, CameraIntrinsics};
    use rand::Rng;

    /// Random texture and a copy shifted so that `right(x) = left(x + shift)`.
    pub(crate) fn shifted_pair(w: u32, h: u32, shift: usize, seed: u64) -> (GrayImage, GrayImage) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wide = w as usize + shift;
        let base: Vec<u8> = (0..wide * h as usize).map(|_| rng.random()).collect();
        let mut l = Vec::new();
        let mut r = Vec::new();
        for y in 0..h as usize {
            for x in 0..w as usize {
                l.push(base[y * wide + x]);
                r.push(base[y * wide + x + shift]);
            }
        }
        (GrayImage::new(w, h, l).unwrap(), GrayImage::new(w, h, r).unwrap())
    }

    #[test]
    fn integer_shift_recovered() {
        let (l, r) = shifted_pair(160, 120, 7, 1);
        let d = block_match(&l, &r, 32, 9).unwrap();
        let valid: Vec<f64> = (0..d.values.len()).filter(|&i| d.valid[i]).map(|i| d.values[i]).collect();
        assert!(valid.len() > 100 * 90);
        let good = valid.iter().filter(|&&v| (v - 7.0).abs() <= 0.25).count();
        assert!(good as f64 >= 0.99 * valid.len() as f64, "{good}/{}", valid.len());
    }

    #[test]
    fn zero_shift() {
        let (l, _) = shifted_pair(80, 60, 0, 2);
        let d = block_match(&l, &l, 16, 5).unwrap();
        assert!(d.valid_count() > 0);
        for i in 0..d.values.len() {
            if d.valid[i] {
                assert!(d.values[i].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn textureless_is_invalid() {
        let g = GrayImage::filled(64, 48, 128);
        let d = block_match(&g, &g, 16, 5).unwrap();
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn mirror_symmetry() {
        let (l, r) = shifted_pair(96, 64, 5, 3);
        let p = BlockMatchParams {
            max_disparity: 16,
            window: 7,
            ..Default::default()
        };
        let (dl, dr) = block_match_pair(&l, &r, &p).unwrap();
        let (ml, mr) = block_match_pair(&r.mirrored(), &l.mirrored(), &p).unwrap();
        assert_eq!(ml, dr.mirrored());
        assert_eq!(mr, dl.mirrored());
    }

    #[test]
    fn window_errors() {
        let g = GrayImage::filled(8, 8, 0);
        assert!(matches!(block_match(&g, &g, 4, 9), Err(StereoError::InvalidWindow { .. })));
        assert!(block_match(&g, &g, 4, 4).is_err());
        let h = GrayImage::filled(9, 8, 0);
        assert!(matches!(block_match(&g, &h, 4, 3), Err(StereoError::SizeMismatch(..))));
    }

    #[test]
    fn luma_weights() {
        let g = GrayImage::from_rgb(2, 1, &[255, 0, 0, 0, 0, 255]).unwrap();
        assert_eq!(g.data, vec![76, 29]);
    }

    fn rig() -> StereoRig {
        StereoRig::rectified(CameraIntrinsics::new(600.0, 600.0, 32.0, 24.0, 64, 48).unwrap(), 50.0).unwrap()
    }

    #[test]
    fn gt_disparity_noiseless() {
        let mut depth = vec![0.0; 64 * 48];
        for z in depth.iter_mut().skip(100).take(500) {
            *z = 600.0;
        }
        let d = disparity_from_depth(&depth, 64, 48, &rig(), 0.0, 0).unwrap();
        for (i, &z) in depth.iter().enumerate() {
            if z > 0.0 {
                assert_eq!(d.values[i], 50.0);
                let back = disparity_to_depth(d.values[i], 600.0, 50.0).unwrap();
                assert!((back - z).abs() <= 1e-9 * z);
            } else {
                assert!(!d.valid[i]);
                assert_eq!(d.values[i], 0.0);
            }
        }
    }

    #[test]
    fn gt_disparity_noise_std() {
        let (w, h) = (400u32, 250u32);
        let depth = vec![1000.0; (w * h) as usize];
        let k = CameraIntrinsics::new(600.0, 600.0, 200.0, 125.0, w, h).unwrap();
        let rig = StereoRig::rectified(k, 50.0).unwrap();
        let d = disparity_from_depth(&depth, w, h, &rig, 1.0, 11).unwrap();
        let errs: Vec<f64> = d.values.iter().map(|v| v - 30.0).collect();
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 1.0).abs() <= 0.02, "std {std}");
    }

    #[test]
    fn gt_disparity_requires_rectified() {
        let k = CameraIntrinsics::new(600.0, 600.0, 32.0, 24.0, 64, 48).unwrap();
        let general = StereoRig::general(
            k,
            k,
            crate::geometry::Pose::from_axis_angle(nalgebra::Vector3::new(0.0, 0.1, 0.0), nalgebra::Vector3::new(-50.0, 0.0, 0.0)),
        )
        .unwrap();
        assert!(disparity_from_depth(&vec![0.0; 64 * 48], 64, 48, &general, 0.0, 0).is_err());
    }
}
