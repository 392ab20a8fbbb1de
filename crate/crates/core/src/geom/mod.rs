//! Point clouds, meshes, spatial queries and the distance kernels shared by
//! every stage.

mod cloud;
mod distance;
mod index;
mod mesh;
mod sampling;

pub use cloud::{Normalization, PointCloud};
pub use distance::{
    chamfer, chamfer_terms, closest_point_on_triangle, nearest_neighbors, point_to_mesh,
    MeshDistance, SurfacePoint, TriangleBvh,
};
pub use index::SpatialIndex;
pub use mesh::{quad, uv_sphere, TriMesh};
pub use sampling::{fps, fps_from};

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: &[Vec3]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        Some(b)
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    /// Squared distance from `p` to the box (zero inside).
    #[inline]
    pub fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}
