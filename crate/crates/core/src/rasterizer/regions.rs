use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RasterError, TriMesh};

/// Surface-region count used when none is configured.
pub const DEFAULT_REGION_COUNT: usize = 64;

/// Greedy farthest-point sampling starting at `first`. Ties resolve to the
/// lowest index.
pub fn farthest_point_sampling(points: &[Vector3<f64>], count: usize, first: usize) -> Vec<usize> {
    if points.is_empty() || count == 0 {
        return Vec::new();
    }
    let count = count.min(points.len());
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while chosen.len() < count {
        let mut best = 0;
        for (i, &d) in dist.iter().enumerate() {
            if d > dist[best] {
                best = i;
            }
        }
        chosen.push(best);
        for (i, p) in points.iter().enumerate() {
            dist[i] = dist[i].min((p - points[best]).norm_squared());
        }
    }
    chosen
}

/// Labels every face with the index of the seed nearest to its centroid.
pub fn assign_regions(mesh: &TriMesh, seeds: &[Vector3<f64>]) -> Vec<u32> {
    (0..mesh.faces.len())
        .map(|f| {
            let c = mesh.face_centroid(f);
            let mut best = (f64::INFINITY, 0u32);
            for (s, seed) in seeds.iter().enumerate() {
                let d = (c - seed).norm_squared();
                if d < best.0 {
                    best = (d, s as u32);
                }
            }
            best.1
        })
        .collect()
}

/// Partitions the surface into `k` regions: farthest-point sampling over
/// face centroids (first seed picked by `seed`), then nearest-seed labels.
pub fn region_partition(mesh: &TriMesh, k: usize, seed: u64) -> Result<Vec<u32>, RasterError> {
    let m = mesh.faces.len();
    if k == 0 || k > m {
        return Err(RasterError::InvalidRegions(format!(
            "cannot split {m} faces into {k} regions"
        )));
    }
    let centroids: Vec<Vector3<f64>> = (0..m).map(|f| mesh.face_centroid(f)).collect();
    let first = ChaCha8Rng::seed_from_u64(seed).random_range(0..m);
    let seeds: Vec<Vector3<f64>> = farthest_point_sampling(&centroids, k, first)
        .into_iter()
        .map(|i| centroids[i])
        .collect();
    Ok(assign_regions(mesh, &seeds))
}
