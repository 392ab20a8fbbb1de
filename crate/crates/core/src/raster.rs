//! Z-buffer rasterizer producing depth, face-id and flat normal buffers.
//!
//! Pixel centers sit at integer coordinates, matching [`Camera`]. Coverage
//! uses a top-left style tie rule so a pixel on an edge shared by two faces
//! belongs to exactly one of them. Depth is the exact camera-z of the
//! pixel's ray hitting the face plane.

use std::path::Path;

use image::RgbImage;

use crate::camera::{Camera, CameraModel};
use crate::error::Result;
use crate::geom::{Aabb, TriMesh, Vec3};
use crate::io::{write_mask_png, write_pfm, write_rgb_png, FloatImage};

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBuffer {
    pub width: usize,
    pub height: usize,
    /// Camera z, `+inf` where empty.
    pub depth: Vec<f64>,
    /// Face index, `-1` where empty.
    pub face_id: Vec<i64>,
    /// World-frame unit normals facing the camera, zero where empty.
    pub normal: Option<Vec<Vec3>>,
}

impl FrameBuffer {
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.face_id[y * self.width + x] >= 0
    }

    pub fn mask(&self) -> Vec<bool> {
        self.face_id.iter().map(|&f| f >= 0).collect()
    }

    pub fn save_depth_pfm(&self, path: &Path) -> Result<()> {
        write_pfm(
            path,
            &FloatImage {
                width: self.width,
                height: self.height,
                channels: 1,
                data: self.depth.iter().map(|&d| d as f32).collect(),
            },
        )
    }

    pub fn save_silhouette_png(&self, path: &Path) -> Result<()> {
        write_mask_png(path, self.width, self.height, &self.mask())
    }

    /// Face ids hashed to colors, black background.
    pub fn save_face_id_png(&self, path: &Path) -> Result<()> {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, &f) in self.face_id.iter().enumerate() {
            if f >= 0 {
                let h = (f as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let c = [(h >> 16) as u8 | 0x40, (h >> 32) as u8 | 0x40, (h >> 48) as u8 | 0x40];
                img.put_pixel((i % self.width) as u32, (i / self.width) as u32, image::Rgb(c));
            }
        }
        write_rgb_png(path, &img)
    }
}

struct ScreenTri {
    uv: [(f64, f64); 3],
    /// Face plane in camera frame: `n · X = d`.
    n: Vec3,
    d: f64,
}

fn screen_triangle(cam_pts: &[Vec3; 3], camera: &Camera) -> Option<ScreenTri> {
    let mut uv = [(0.0, 0.0); 3];
    for (k, p) in cam_pts.iter().enumerate() {
        if camera.model == CameraModel::Pinhole && p.z <= 1e-9 {
            // no near-plane clipping; faces crossing the camera plane are skipped
            return None;
        }
        let (u, v, _) = camera.project_camera(p).ok()?;
        uv[k] = (u, v);
    }
    let n = (cam_pts[1] - cam_pts[0]).cross(&(cam_pts[2] - cam_pts[0]));
    let d = n.dot(&cam_pts[0]);
    Some(ScreenTri { uv, n, d })
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

#[inline]
fn owns_edge(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// Render face ids and depth. Faces are not culled by winding.
pub fn rasterize(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> FrameBuffer {
    let mut fb = FrameBuffer {
        width,
        height,
        depth: vec![f64::INFINITY; width * height],
        face_id: vec![-1; width * height],
        normal: None,
    };
    let cam_verts: Vec<Vec3> = mesh.vertices.iter().map(|v| camera.to_camera(v)).collect();
    for (f, face) in mesh.faces.iter().enumerate() {
        let pts = [cam_verts[face[0]], cam_verts[face[1]], cam_verts[face[2]]];
        let Some(tri) = screen_triangle(&pts, camera) else {
            continue;
        };
        let [mut a, mut b, c] = tri.uv;
        let area = edge(a, b, c);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        if area < 0.0 {
            std::mem::swap(&mut a, &mut b);
        }
        let umin = a.0.min(b.0).min(c.0).ceil().max(0.0);
        let umax = a.0.max(b.0).max(c.0).floor().min(width as f64 - 1.0);
        let vmin = a.1.min(b.1).min(c.1).ceil().max(0.0);
        let vmax = a.1.max(b.1).max(c.1).floor().min(height as f64 - 1.0);
        if umin > umax || vmin > vmax {
            continue;
        }
        let own = [owns_edge(b, c), owns_edge(c, a), owns_edge(a, b)];
        for v in vmin as usize..=vmax as usize {
            for u in umin as usize..=umax as usize {
                let p = (u as f64, v as f64);
                let e = [edge(b, c, p), edge(c, a, p), edge(a, b, p)];
                if !(0..3).all(|k| e[k] > 0.0 || (e[k] == 0.0 && own[k])) {
                    continue;
                }
                let z = match camera.model {
                    CameraModel::Pinhole => {
                        let r = Vec3::new((p.0 - camera.cx) / camera.fx, (p.1 - camera.cy) / camera.fy, 1.0);
                        tri.d / tri.n.dot(&r)
                    }
                    CameraModel::Orthographic => {
                        let x = (p.0 - camera.cx) * camera.pixel_size;
                        let y = (p.1 - camera.cy) * camera.pixel_size;
                        (tri.d - tri.n.x * x - tri.n.y * y) / tri.n.z
                    }
                };
                let i = v * width + u;
                if z.is_finite() && z < fb.depth[i] {
                    fb.depth[i] = z;
                    fb.face_id[i] = f as i64;
                }
            }
        }
    }
    fb
}

/// World-frame unit normal of face `f`, flipped toward the camera.
pub fn facing_normal(mesh: &TriMesh, f: usize, camera: &Camera) -> Vec3 {
    let n = mesh.face_cross(f).normalize();
    let a = mesh.vertices[mesh.faces[f][0]];
    let to_cam = match camera.model {
        CameraModel::Pinhole => camera.pose.translation.vector - a,
        CameraModel::Orthographic => -(camera.pose.rotation * Vec3::z()),
    };
    if n.dot(&to_cam) < 0.0 {
        -n
    } else {
        n
    }
}

/// [`rasterize`] plus the flat normal buffer.
pub fn rasterize_with_normals(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> FrameBuffer {
    let mut fb = rasterize(mesh, camera, width, height);
    let mut cache: Vec<Option<Vec3>> = vec![None; mesh.faces.len()];
    let normals = fb
        .face_id
        .iter()
        .map(|&f| {
            if f < 0 {
                Vec3::zeros()
            } else {
                *cache[f as usize].get_or_insert_with(|| facing_normal(mesh, f as usize, camera))
            }
        })
        .collect();
    fb.normal = Some(normals);
    fb
}

/// Binary silhouette, row-major.
pub fn silhouette(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> Vec<bool> {
    rasterize(mesh, camera, width, height).mask()
}

/// Camera-facing flat normals in the view frame (x right, y up, z toward the
/// viewer), zero on background pixels. Row-major.
pub fn normal_map(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> Vec<Vec3> {
    let fb = rasterize_with_normals(mesh, camera, width, height);
    let r_inv = camera.pose.rotation.inverse();
    fb.normal
        .unwrap()
        .into_iter()
        .zip(&fb.face_id)
        .map(|(n, &f)| {
            if f < 0 {
                Vec3::zeros()
            } else {
                let c = r_inv * n;
                Vec3::new(c.x, -c.y, -c.z)
            }
        })
        .collect()
}

/// Orthographic cameras at yaw 0°, 90°, 180°, 270° about +y, framing `bounds`
/// with a 5% margin at `res × res`.
pub fn four_view_rig(bounds: &Aabb, res: usize) -> Vec<Camera> {
    let center = bounds.center();
    let ext = bounds.extent();
    let span = ext.x.max(ext.y).max(ext.z).max(1e-9) * 1.1;
    let dist = 2.0 * ext.norm().max(1e-9);
    let half = (res as f64 - 1.0) / 2.0;
    [0.0_f64, 90.0, 180.0, 270.0]
        .iter()
        .map(|deg| {
            let yaw = deg.to_radians();
            let dir = Vec3::new(yaw.sin(), 0.0, yaw.cos());
            Camera::orthographic(span / res as f64, half, half).looking_at(center - dist * dir, center, Vec3::y())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::quad;

    fn ortho(res: usize, span: f64) -> Camera {
        let half = (res as f64 - 1.0) / 2.0;
        Camera::orthographic(span / res as f64, half, half).looking_at(
            Vec3::new(0.0, 0.0, -5.0),
            Vec3::zeros(),
            Vec3::y(),
        )
    }

    #[test]
    fn full_viewport_triangle() {
        let tri = TriMesh::new(
            vec![Vec3::new(-10.0, -10.0, 0.0), Vec3::new(10.0, -10.0, 0.0), Vec3::new(0.0, 20.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let fb = rasterize(&tri, &ortho(16, 2.0), 16, 16);
        assert!(fb.face_id.iter().all(|&f| f == 0));
        assert!(fb.depth.iter().all(|&d| (d - 5.0).abs() < 1e-12));
    }

    #[test]
    fn nearer_triangle_wins() {
        let far = quad(-10.0, 10.0, -10.0, 10.0, 1.0);
        let near = quad(-10.0, 10.0, -10.0, 10.0, -1.0);
        let m = far.merged(&near);
        let fb = rasterize(&m, &ortho(8, 2.0), 8, 8);
        assert!(fb.face_id.iter().all(|&f| f == 2 || f == 3));
    }

    #[test]
    fn shared_edge_pixels_counted_once() {
        // diagonal of the quad passes through pixel centers
        let q = quad(-1.0, 1.0, -1.0, 1.0, 0.0);
        let cam = Camera::orthographic(0.25, 4.0, 4.0).looking_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y());
        let fb = rasterize(&q, &cam, 9, 9);
        let covered = fb.face_id.iter().filter(|&&f| f >= 0).count();
        // pixels -4..=4 map to [-1, 1]; on-boundary handling keeps the count
        // between the open (7x7) and closed (9x9) squares
        assert!(covered >= 49 && covered <= 81);
        let mut per_face = [0usize; 2];
        for &f in &fb.face_id {
            if f >= 0 {
                per_face[f as usize] += 1;
            }
        }
        assert_eq!(per_face[0] + per_face[1], covered);
    }

    #[test]
    fn normal_map_conventions() {
        let q = quad(-0.5, 0.5, -0.5, 0.5, 0.0);
        let cam = ortho(16, 2.0);
        let nm = normal_map(&q, &cam, 16, 16);
        let fb = rasterize(&q, &cam, 16, 16);
        for (n, &f) in nm.iter().zip(&fb.face_id) {
            if f >= 0 {
                assert!((n - Vec3::z()).norm() < 1e-12);
            } else {
                assert_eq!(*n, Vec3::zeros());
            }
        }
    }

    #[test]
    fn empty_region_is_blank() {
        let q = quad(5.0, 6.0, 5.0, 6.0, 0.0);
        assert!(silhouette(&q, &ortho(8, 2.0), 8, 8).iter().all(|&m| !m));
    }
}
