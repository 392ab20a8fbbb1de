use nalgebra::{Isometry3, Point3};
use rand::Rng;

use super::{Aabb, PointCloud, Vec3};
use crate::error::{HapError, Result};

/// Indexed triangle surface.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let m = TriMesh { vertices, faces };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= nv) {
                return Err(HapError::invalid(format!(
                    "face {i} {f:?} references a vertex >= {nv}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(HapError::invalid(format!("face {i} {f:?} repeats a vertex")));
            }
        }
        if let Some(i) = self.vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(HapError::invalid(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal (length = twice the area), right-handed winding.
    pub fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Submesh made of the given faces. Vertices are kept as-is (unreferenced
    /// ones included), so vertex indices stay aligned with `self`.
    pub fn with_faces(&self, faces: &[usize]) -> TriMesh {
        TriMesh {
            vertices: self.vertices.clone(),
            faces: faces.iter().map(|&f| self.faces[f]).collect(),
        }
    }

    /// Sorted, deduplicated vertex ids referenced by `faces`.
    pub fn vertices_of(&self, faces: &[usize]) -> Vec<usize> {
        let mut used = vec![false; self.vertices.len()];
        for &f in faces {
            for &v in &self.faces[f] {
                used[v] = true;
            }
        }
        used.iter()
            .enumerate()
            .filter_map(|(i, &u)| u.then_some(i))
            .collect()
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|p| iso.transform_point(&Point3::from(*p)).coords)
                .collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Concatenate two meshes into one vertex/face list.
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        TriMesh { vertices, faces }
    }

    /// `n` points distributed uniformly by area. Each sample records its face.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Result<(Vec<Vec3>, Vec<usize>)> {
        if self.is_empty() {
            return Err(HapError::invalid("cannot sample an empty mesh"));
        }
        let mut cdf = Vec::with_capacity(self.faces.len());
        let mut acc = 0.0;
        for f in 0..self.faces.len() {
            acc += self.face_area(f);
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(HapError::invalid("mesh has zero area"));
        }
        let mut pts = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.random::<f64>() * acc;
            let f = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
            let [a, b, c] = self.triangle(f);
            let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            pts.push(a + (b - a) * r1 + (c - a) * r2);
            ids.push(f);
        }
        Ok((pts, ids))
    }

    pub fn sample_cloud<R: Rng>(&self, n: usize, rng: &mut R) -> Result<PointCloud> {
        Ok(PointCloud::from_positions(self.sample_surface(n, rng)?.0))
    }

    /// Area-weighted vertex normals (zero for isolated vertices).
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            let n = self.face_cross(f);
            for &v in face {
                acc[v] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize(1e-300).unwrap_or_else(Vec3::zeros))
            .collect()
    }
}

/// Axis-aligned triangulated rectangle `[x0, x1] × [y0, y1]` at height `z`,
/// facing +z.
pub fn quad(x0: f64, x1: f64, y0: f64, y1: f64, z: f64) -> TriMesh {
    TriMesh {
        vertices: vec![
            Vec3::new(x0, y0, z),
            Vec3::new(x1, y0, z),
            Vec3::new(x1, y1, z),
            Vec3::new(x0, y1, z),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
    }
}

/// UV sphere with `rings` latitude bands and `segments` longitude slices.
pub fn uv_sphere(center: Vec3, radius: f64, rings: usize, segments: usize) -> TriMesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let mut vertices = vec![center + Vec3::new(0.0, 0.0, radius)];
    for r in 1..rings {
        let phi = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let th = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push(
                center + radius * Vec3::new(phi.sin() * th.cos(), phi.sin() * th.sin(), phi.cos()),
            );
        }
    }
    vertices.push(center - Vec3::new(0.0, 0.0, radius));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    TriMesh { vertices, faces }
}
