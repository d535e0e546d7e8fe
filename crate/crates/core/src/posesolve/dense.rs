use nalgebra::{Vector2, Vector3};

use super::{Correspondence, CorrespondenceSet, View};
use crate::rasterizer::DenseFeatureMaps;

/// Per-view cap on correspondences extracted from dense maps.
pub const DEFAULT_MAX_CORRESPONDENCES: usize = 2000;

/// Dense XYZ map of one instance → at most `max_count` correspondences via
/// stratified grid sampling over the instance's bounding box: one pixel per
/// cell, the one closest to the cell center.
pub fn correspondences_from_maps(maps: &DenseFeatureMaps, instance: u32, view: View, max_count: usize) -> CorrespondenceSet {
    let w = maps.width as usize;
    let pixels: Vec<usize> = (0..maps.len()).filter(|&i| maps.instance[i] == instance).collect();
    let mut set = CorrespondenceSet::new();
    if pixels.is_empty() || max_count == 0 {
        return set;
    }
    let push = |set: &mut CorrespondenceSet, i: usize| {
        let xyz = maps.xyz[i];
        set.push(Correspondence::new(
            Vector2::new((i % w) as f64, (i / w) as f64),
            Vector3::new(xyz[0], xyz[1], xyz[2]),
            view,
        ))
        .expect("finite map values");
    };
    if pixels.len() <= max_count {
        for &i in &pixels {
            push(&mut set, i);
        }
        return set;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &i in &pixels {
        let (x, y) = (i % w, i / w);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let mut cell = ((pixels.len() as f64 / max_count as f64).sqrt().ceil() as usize).max(1);
    loop {
        let cols = (x1 - x0) / cell + 1;
        let rows = (y1 - y0) / cell + 1;
        // (distance² to cell center, pixel index) per cell
        let mut best: Vec<Option<(f64, usize)>> = vec![None; cols * rows];
        for &i in &pixels {
            let (x, y) = (i % w - x0, i / w - y0);
            let (cx, cy) = (x / cell, y / cell);
            let center = ((cx as f64 + 0.5) * cell as f64 - 0.5, (cy as f64 + 0.5) * cell as f64 - 0.5);
            let d = (x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2);
            let slot = &mut best[cy * cols + cx];
            if slot.is_none_or(|(bd, _)| d < bd) {
                *slot = Some((d, i));
            }
        }
        let chosen: Vec<usize> = best.iter().flatten().map(|&(_, i)| i).collect();
        if chosen.len() <= max_count {
            for i in chosen {
                push(&mut set, i);
            }
            return set;
        }
        cell += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, Pose};
    use crate::rasterizer::{rasterize, TriMesh};

    #[test]
    fn caps_and_spreads_samples() {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        let mesh = TriMesh::cube(100.0).unwrap();
        let pose = Pose::from_axis_angle(Vector3::new(0.3, 0.4, 0.0), Vector3::new(0.0, 0.0, 400.0));
        let maps = rasterize(&mesh, &pose, &k);
        let n = maps.foreground_count();
        assert!(n > 2000);
        let set = correspondences_from_maps(&maps, 0, View::Left, 2000);
        assert!(set.len() <= 2000 && set.len() > 1000, "{}", set.len());
        let all = correspondences_from_maps(&maps, 0, View::Right, usize::MAX);
        assert_eq!(all.len(), n);
        assert_eq!(all.count(View::Right), n);
        assert!(correspondences_from_maps(&maps, 5, View::Left, 100).is_empty());
    }
}
