//! Perturbations that stand in for imperfect learned features.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::CameraIntrinsics;
use crate::posesolve::{Correspondence, CorrespondenceSet};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Gaussian pixel noise (px) on correspondence image coordinates.
    pub pixel_sigma: f64,
    /// Gaussian noise (mm) on object coordinates.
    pub object_sigma_mm: f64,
    /// Fraction of correspondences whose object coordinate is replaced by a
    /// uniform point in the model's bounding box.
    pub outlier_fraction: f64,
    /// Gaussian noise (px) on ground-truth disparity.
    pub disparity_sigma: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (key, v) in [
            ("pixel_sigma", self.pixel_sigma),
            ("object_sigma_mm", self.object_sigma_mm),
            ("disparity_sigma", self.disparity_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("noise.{key} must be finite and non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(format!("noise.outlier_fraction {} outside [0, 1]", self.outlier_fraction));
        }
        Ok(())
    }
}

/// Applies pixel noise (clamped to the image), object noise and outlier
/// replacement to every correspondence, in order.
pub fn perturb<R: Rng>(
    set: &CorrespondenceSet,
    k: &CameraIntrinsics,
    half_extent: &Vector3<f64>,
    noise: &NoiseConfig,
    rng: &mut R,
) -> CorrespondenceSet {
    let px = Normal::new(0.0, noise.pixel_sigma).expect("validated sigma");
    let obj = Normal::new(0.0, noise.object_sigma_mm).expect("validated sigma");
    let mut out = CorrespondenceSet::new();
    for c in set.entries() {
        let pixel = Vector2::new(
            (c.pixel.x + px.sample(rng)).clamp(0.0, (k.width - 1) as f64),
            (c.pixel.y + px.sample(rng)).clamp(0.0, (k.height - 1) as f64),
        );
        let mut object = c.object + Vector3::new(obj.sample(rng), obj.sample(rng), obj.sample(rng));
        if noise.outlier_fraction > 0.0 && rng.random::<f64>() < noise.outlier_fraction {
            object = half_extent.map(|h| if h > 0.0 { rng.random_range(-h..h) } else { 0.0 });
        }
        out.push(Correspondence {
            pixel,
            object,
            ..*c
        })
        .expect("finite perturbation");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posesolve::View;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(n: usize) -> CorrespondenceSet {
        let mut s = CorrespondenceSet::new();
        for i in 0..n {
            s.push(Correspondence::new(
                Vector2::new(100.0 + (i % 50) as f64, 100.0 + (i / 50) as f64),
                Vector3::new(1.0, 2.0, 3.0),
                View::Left,
            ))
            .unwrap();
        }
        s
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = set(20);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(perturb(&s, &k(), &Vector3::new(10.0, 10.0, 10.0), &NoiseConfig::default(), &mut rng), s);
    }

    #[test]
    fn pixel_noise_statistics() {
        let s = set(5000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = NoiseConfig {
            pixel_sigma: 2.0,
            ..Default::default()
        };
        let out = perturb(&s, &k(), &Vector3::new(10.0, 10.0, 10.0), &noise, &mut rng);
        let d: Vec<f64> = out.entries().iter().zip(s.entries()).map(|(a, b)| a.pixel.x - b.pixel.x).collect();
        let var = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        assert!((var.sqrt() - 2.0).abs() < 0.1, "{}", var.sqrt());
    }

    #[test]
    fn outliers_stay_in_box_and_pixels_in_image() {
        let mut s = CorrespondenceSet::new();
        s.push(Correspondence::new(Vector2::new(0.0, 479.0), Vector3::zeros(), View::Right)).unwrap();
        let noise = NoiseConfig {
            pixel_sigma: 50.0,
            outlier_fraction: 1.0,
            ..Default::default()
        };
        let h = Vector3::new(5.0, 6.0, 7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let out = perturb(&s, &k(), &h, &noise, &mut rng);
            let c = out.entries()[0];
            assert!(k().contains(c.pixel.x, c.pixel.y));
            assert!(c.object.x.abs() <= 5.0 && c.object.y.abs() <= 6.0 && c.object.z.abs() <= 7.0);
            assert_eq!(c.view, View::Right);
        }
    }
}
