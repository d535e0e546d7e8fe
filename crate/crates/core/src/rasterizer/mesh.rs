use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RasterError;

/// Minimum triangle area (mm²) for a face to be rendered.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Triangle mesh in the object frame (mm) with per-face surface region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub region_of_face: Vec<u32>,
    pub diameter: f64,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, RasterError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(RasterError::InvalidMesh("mesh has no vertices or faces".into()));
        }
        let n = vertices.len() as u32;
        if let Some((fi, f)) = faces.iter().enumerate().find(|(_, f)| f.iter().any(|&i| i >= n)) {
            return Err(RasterError::InvalidMesh(format!(
                "face {fi} references vertex {:?} but mesh has {n} vertices",
                f
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(RasterError::InvalidMesh("non-finite vertex".into()));
        }
        let diameter = max_pairwise_distance(&vertices);
        let region_of_face = vec![0; faces.len()];
        Ok(TriMesh {
            vertices,
            faces,
            region_of_face,
            diameter,
        })
    }

    pub fn with_regions(mut self, region_of_face: Vec<u32>) -> Result<Self, RasterError> {
        if region_of_face.len() != self.faces.len() {
            return Err(RasterError::InvalidMesh(format!(
                "{} region labels for {} faces",
                region_of_face.len(),
                self.faces.len()
            )));
        }
        self.region_of_face = region_of_face;
        Ok(self)
    }

    pub fn face_vertices(&self, face: usize) -> [Vector3<f64>; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_vertices(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_centroid(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_vertices(face);
        (a + b + c) / 3.0
    }

    pub fn degenerate_face_count(&self) -> usize {
        (0..self.faces.len())
            .filter(|&f| self.face_area(f) <= MIN_FACE_AREA)
            .count()
    }

    /// Per-axis maximum of |coordinate| over all vertices.
    pub fn half_extent(&self) -> Vector3<f64> {
        self.vertices
            .iter()
            .fold(Vector3::zeros(), |acc, v| acc.sup(&v.abs()))
    }

    /// Radius of the origin-centered sphere enclosing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Axis-aligned cuboid centered at the origin; every side split into
    /// `subdiv × subdiv` quads of two triangles each.
    pub fn cuboid(size: Vector3<f64>, subdiv: usize) -> Result<Self, RasterError> {
        if size.iter().any(|&s| !(s > 0.0)) || subdiv == 0 {
            return Err(RasterError::InvalidMesh(format!(
                "cuboid size {size:?} subdiv {subdiv}"
            )));
        }
        let h = size / 2.0;
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        // (normal axis, sign); the two tangent axes follow cyclically
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let (ua, va) = ((axis + 1) % 3, (axis + 2) % 3);
                let base = vertices.len() as u32;
                for j in 0..=subdiv {
                    for i in 0..=subdiv {
                        let mut p = Vector3::zeros();
                        p[axis] = sign * h[axis];
                        p[ua] = -h[ua] + size[ua] * i as f64 / subdiv as f64;
                        p[va] = -h[va] + size[va] * j as f64 / subdiv as f64;
                        vertices.push(p);
                    }
                }
                let row = subdiv as u32 + 1;
                for j in 0..subdiv as u32 {
                    for i in 0..subdiv as u32 {
                        let a = base + j * row + i;
                        let b = a + 1;
                        let c = a + row;
                        let d = c + 1;
                        if sign > 0.0 {
                            faces.push([a, b, d]);
                            faces.push([a, d, c]);
                        } else {
                            faces.push([a, d, b]);
                            faces.push([a, c, d]);
                        }
                    }
                }
            }
        }
        Self::new(vertices, faces)
    }

    pub fn cube(side: f64) -> Result<Self, RasterError> {
        Self::cuboid(Vector3::repeat(side), 1)
    }

    /// Latitude/longitude sphere centered at the origin.
    pub fn uv_sphere(radius: f64, stacks: usize, slices: usize) -> Result<Self, RasterError> {
        if !(radius > 0.0) || stacks < 2 || slices < 3 {
            return Err(RasterError::InvalidMesh(format!(
                "sphere radius {radius} stacks {stacks} slices {slices}"
            )));
        }
        let mut vertices = vec![Vector3::new(0.0, 0.0, radius)];
        for s in 1..stacks {
            let theta = PI * s as f64 / stacks as f64;
            for l in 0..slices {
                let phi = 2.0 * PI * l as f64 / slices as f64;
                vertices.push(radius * Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
            }
        }
        vertices.push(Vector3::new(0.0, 0.0, -radius));
        let south = vertices.len() as u32 - 1;
        let ring = |s: usize, l: usize| 1 + ((s - 1) * slices + l % slices) as u32;
        let mut faces = Vec::new();
        for l in 0..slices {
            faces.push([0, ring(1, l), ring(1, l + 1)]);
        }
        for s in 1..stacks - 1 {
            for l in 0..slices {
                let (a, b, c, d) = (ring(s, l), ring(s, l + 1), ring(s + 1, l), ring(s + 1, l + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for l in 0..slices {
            faces.push([south, ring(stacks - 1, l + 1), ring(stacks - 1, l)]);
        }
        Self::new(vertices, faces)
    }

    /// Closed cylinder around the z axis, centered at the origin.
    pub fn cylinder(radius: f64, height: f64, segments: usize) -> Result<Self, RasterError> {
        if !(radius > 0.0 && height > 0.0) || segments < 3 {
            return Err(RasterError::InvalidMesh(format!(
                "cylinder radius {radius} height {height} segments {segments}"
            )));
        }
        let hz = height / 2.0;
        let mut vertices = vec![Vector3::new(0.0, 0.0, hz), Vector3::new(0.0, 0.0, -hz)];
        for z in [hz, -hz] {
            for s in 0..segments {
                let phi = 2.0 * PI * s as f64 / segments as f64;
                vertices.push(Vector3::new(radius * phi.cos(), radius * phi.sin(), z));
            }
        }
        let top = |s: usize| 2 + (s % segments) as u32;
        let bot = |s: usize| 2 + (segments + s % segments) as u32;
        let mut faces = Vec::new();
        for s in 0..segments {
            faces.push([0, top(s), top(s + 1)]);
            faces.push([1, bot(s + 1), bot(s)]);
            faces.push([top(s), bot(s), bot(s + 1)]);
            faces.push([top(s), bot(s + 1), top(s + 1)]);
        }
        Self::new(vertices, faces)
    }
}

/// Exact diameter by brute force over vertex pairs.
pub fn max_pairwise_distance(points: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

/// Parametric description of the synthetic object library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Cuboid { sx: f64, sy: f64, sz: f64, subdiv: usize },
    Sphere { radius: f64, stacks: usize, slices: usize },
    Cylinder { radius: f64, height: f64, segments: usize },
}

impl ShapeSpec {
    pub fn build(&self) -> Result<TriMesh, RasterError> {
        match *self {
            ShapeSpec::Cuboid { sx, sy, sz, subdiv } => TriMesh::cuboid(Vector3::new(sx, sy, sz), subdiv),
            ShapeSpec::Sphere { radius, stacks, slices } => TriMesh::uv_sphere(radius, stacks, slices),
            ShapeSpec::Cylinder { radius, height, segments } => TriMesh::cylinder(radius, height, segments),
        }
    }

    /// Continuous rotational symmetry (ADD-S applies).
    pub fn is_symmetric(&self) -> bool {
        match *self {
            ShapeSpec::Cuboid { .. } => false,
            ShapeSpec::Sphere { .. } | ShapeSpec::Cylinder { .. } => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cube_geometry() {
        let m = TriMesh::cube(100.0).unwrap();
        assert_eq!(m.faces.len(), 12);
        assert_relative_eq!(m.diameter, 100.0 * 3f64.sqrt(), epsilon = 1e-9);
        assert_eq!(m.degenerate_face_count(), 0);
        assert_relative_eq!(m.half_extent(), Vector3::repeat(50.0));
        let area: f64 = (0..m.faces.len()).map(|f| m.face_area(f)).sum();
        assert_relative_eq!(area, 6.0 * 100.0 * 100.0, epsilon = 1e-6);
    }

    #[test]
    fn cube_faces_point_outward() {
        let m = TriMesh::cuboid(Vector3::new(40.0, 60.0, 80.0), 3).unwrap();
        for f in 0..m.faces.len() {
            let [a, b, c] = m.face_vertices(f);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&m.face_centroid(f)) > 0.0, "face {f} inward");
        }
    }

    #[test]
    fn sphere_and_cylinder() {
        let s = TriMesh::uv_sphere(30.0, 12, 24).unwrap();
        assert_relative_eq!(s.diameter, 60.0, epsilon = 1e-9);
        assert_eq!(s.degenerate_face_count(), 0);
        let c = TriMesh::cylinder(20.0, 50.0, 32).unwrap();
        assert_relative_eq!(c.diameter, (40.0f64.powi(2) + 50.0f64.powi(2)).sqrt(), epsilon = 1e-9);
        assert_eq!(c.degenerate_face_count(), 0);
    }

    #[test]
    fn bad_indices_rejected() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(v, vec![]).is_err());
    }
}
