use rayon::prelude::*;

use super::{Aabb, PointCloud, SpatialIndex, TriMesh, Vec3};
use crate::error::{HapError, Result};

/// Closest point on a triangle, with its barycentric weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub point: Vec3,
    pub bary: [f64; 3],
    pub d2: f64,
}

/// Exact closest point on triangle `abc` to `p` (Voronoi-region walk, after
/// Ericson, "Real-Time Collision Detection", 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> SurfacePoint {
    let finish = |bary: [f64; 3]| {
        let point = a * bary[0] + b * bary[1] + c * bary[2];
        SurfacePoint {
            point,
            bary,
            d2: (p - point).norm_squared(),
        }
    };
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return finish([1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return finish([0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return finish([1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return finish([0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return finish([1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return finish([0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    finish([1.0 - v - w, v, w])
}

/// Bounding-volume hierarchy over a subset of a mesh's faces, for exact
/// closest-point queries.
#[derive(Clone, Debug)]
pub struct TriangleBvh<'m> {
    mesh: &'m TriMesh,
    faces: Vec<usize>,
    nodes: Vec<BvhNode>,
}

#[derive(Clone, Debug)]
struct BvhNode {
    bounds: Aabb,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

const BVH_LEAF: usize = 4;

impl<'m> TriangleBvh<'m> {
    pub fn new(mesh: &'m TriMesh) -> Self {
        Self::over_faces(mesh, (0..mesh.faces.len()).collect())
    }

    /// Index only `faces` (ids into `mesh.faces`).
    pub fn over_faces(mesh: &'m TriMesh, faces: Vec<usize>) -> Self {
        let centroids: Vec<Vec3> = mesh
            .faces
            .iter()
            .map(|f| (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0)
            .collect();
        let mut bvh = TriangleBvh {
            mesh,
            faces,
            nodes: Vec::new(),
        };
        if !bvh.faces.is_empty() {
            let n = bvh.faces.len();
            bvh.build(0, n, &centroids);
        }
        bvh
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &f in &self.faces[start..end] {
            for &v in &self.mesh.faces[f] {
                bounds.grow(&self.mesh.vertices[v]);
            }
            cbounds.grow(&centroids[f]);
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            bounds,
            start,
            end,
            children: None,
        });
        if end - start > BVH_LEAF {
            let axis = cbounds.extent().imax();
            let mid = start + (end - start) / 2;
            self.faces[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
            });
            let l = self.build(start, mid, centroids);
            let r = self.build(mid, end, centroids);
            self.nodes[id].children = Some((l, r));
        }
        id
    }

    /// Closest face and surface point; ties go to the lower face id.
    pub fn closest(&self, p: &Vec3) -> Option<(usize, SurfacePoint)> {
        if self.is_empty() {
            return None;
        }
        let mut best: Option<(usize, SurfacePoint)> = None;
        self.closest_rec(0, p, f64::INFINITY, &mut best);
        best
    }

    /// Like [`closest`](Self::closest), but only faces within squared
    /// distance `max_d2`; prunes far more aggressively.
    pub fn closest_within(&self, p: &Vec3, max_d2: f64) -> Option<(usize, SurfacePoint)> {
        if self.is_empty() {
            return None;
        }
        let mut best: Option<(usize, SurfacePoint)> = None;
        self.closest_rec(0, p, max_d2, &mut best);
        best.filter(|(_, s)| s.d2 <= max_d2)
    }

    /// Exact closest face, seeded with `hint` (a face id that must be in
    /// this hierarchy) whose distance bounds the search from the start.
    /// Same answer as [`closest_within`](Self::closest_within).
    pub fn closest_hinted(&self, p: &Vec3, max_d2: f64, hint: usize) -> Option<(usize, SurfacePoint)> {
        let [a, b, c] = self.mesh.triangle(hint);
        let sp = closest_point_on_triangle(p, &a, &b, &c);
        if sp.d2 > max_d2 {
            return self.closest_within(p, max_d2);
        }
        let mut best = Some((hint, sp));
        self.closest_rec(0, p, max_d2, &mut best);
        best
    }

    fn closest_rec(&self, node: usize, p: &Vec3, limit: f64, best: &mut Option<(usize, SurfacePoint)>) {
        let n = &self.nodes[node];
        let bound = best.as_ref().map_or(limit, |b| b.1.d2);
        if n.bounds.dist2(p) > bound {
            return;
        }
        match n.children {
            None => {
                for &f in &self.faces[n.start..n.end] {
                    let [a, b, c] = self.mesh.triangle(f);
                    let sp = closest_point_on_triangle(p, &a, &b, &c);
                    let better = match best {
                        None => true,
                        Some((bf, bs)) => sp.d2 < bs.d2 || (sp.d2 == bs.d2 && f < *bf),
                    };
                    if better {
                        *best = Some((f, sp));
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (self.nodes[l].bounds.dist2(p), self.nodes[r].bounds.dist2(p));
                if dl <= dr {
                    self.closest_rec(l, p, limit, best);
                    self.closest_rec(r, p, limit, best);
                } else {
                    self.closest_rec(r, p, limit, best);
                    self.closest_rec(l, p, limit, best);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshDistance {
    /// Unsquared distance per query point (meters).
    pub distances: Vec<f64>,
    pub mean: f64,
}

/// Exact Euclidean distance from every point to the closest point on `mesh`.
pub fn point_to_mesh(pc: &PointCloud, mesh: &TriMesh) -> Result<MeshDistance> {
    if mesh.is_empty() {
        return Err(HapError::invalid("point_to_mesh against an empty mesh"));
    }
    let bvh = TriangleBvh::new(mesh);
    let distances: Vec<f64> = pc
        .positions
        .par_iter()
        .map(|p| bvh.closest(p).map(|(_, s)| s.d2.sqrt()).unwrap_or(f64::INFINITY))
        .collect();
    let mean = if distances.is_empty() {
        0.0
    } else {
        distances.iter().sum::<f64>() / distances.len() as f64
    };
    Ok(MeshDistance { distances, mean })
}

/// Nearest index in `target` and squared distance for each query point.
pub fn nearest_neighbors(queries: &[Vec3], target: &SpatialIndex) -> Vec<(usize, f64)> {
    queries.par_iter().map(|q| target.nearest(q)).collect()
}

/// The two directional means of squared nearest-neighbor distance:
/// `(mean over a of d²(a, B), mean over b of d²(b, A))`.
pub fn chamfer_terms(a: &[Vec3], b: &[Vec3]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(HapError::invalid("chamfer distance of an empty cloud"));
    }
    let ia = SpatialIndex::new(a);
    let ib = SpatialIndex::new(b);
    let ab: f64 = nearest_neighbors(a, &ib).iter().map(|x| x.1).sum::<f64>() / a.len() as f64;
    let ba: f64 = nearest_neighbors(b, &ia).iter().map(|x| x.1).sum::<f64>() / b.len() as f64;
    Ok((ab, ba))
}

/// Symmetric chamfer distance with squared nearest-neighbor distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let (ab, ba) = chamfer_terms(&a.positions, &b.positions)?;
    Ok(ab + ba)
}
