//! Parametric body model: linear blend skinning, keypoint projection and the
//! visible / invisible face split.

mod file;
mod mannequin;
mod model;
pub mod rotation;

pub use file::{load_model, save_model};
pub use mannequin::{mannequin, toy_chain};
pub use model::{BodyParams, LBSBodyModel, PosedBody};

use crate::camera::Camera;
use crate::error::Result;
use crate::geom::TriMesh;
use crate::raster::rasterize;

/// Face split by the depth test from `camera`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Visibility {
    /// Faces winning at least one pixel, ascending.
    pub visible: Vec<usize>,
    /// All remaining faces, ascending.
    pub invisible: Vec<usize>,
}

/// A face is visible iff it wins the depth test at one or more pixel centers
/// of a `width × height` render.
pub fn partition_visibility(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> Visibility {
    let fb = rasterize(mesh, camera, width, height);
    let mut seen = vec![false; mesh.faces.len()];
    for &f in &fb.face_id {
        if f >= 0 {
            seen[f as usize] = true;
        }
    }
    let (visible, invisible) = (0..mesh.faces.len()).partition(|&f| seen[f]);
    Visibility { visible, invisible }
}

/// Every regressed joint projected to pixel coordinates.
pub fn project_keypoints(model: &LBSBodyModel, params: &BodyParams, camera: &Camera) -> Result<Vec<[f64; 2]>> {
    let posed = model.forward(params)?;
    posed
        .joints
        .iter()
        .map(|j| camera.project(j).map(|(u, v, _)| [u, v]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{quad, Vec3};
    use crate::error::HapError;

    #[test]
    fn rest_pose_is_template_bit_for_bit() {
        let m = mannequin();
        assert_eq!(m.num_joints(), 24);
        assert!(m.num_vertices() > 1800 && m.num_vertices() < 2200);
        let posed = m.forward(&m.rest_params()).unwrap();
        assert_eq!(posed.mesh.vertices, m.template);
    }

    #[test]
    fn translation_shifts_everything() {
        let m = toy_chain();
        let mut p = m.rest_params();
        p.translation = Vec3::new(0.0, 0.0, 1.0);
        let posed = m.forward(&p).unwrap();
        for (a, b) in posed.mesh.vertices.iter().zip(&m.template) {
            assert_eq!(*a, b + Vec3::new(0.0, 0.0, 1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = toy_chain();
        let mut p = m.rest_params();
        p.beta.push(0.0);
        assert!(matches!(m.forward(&p), Err(HapError::InvalidArgument(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = mannequin();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.faces, m.faces);
        assert_eq!(back.parents, m.parents);
        let p = BodyParams {
            beta: (0..10).map(|i| 0.1 * i as f64).collect(),
            theta: (0..24).map(|j| Vec3::new(0.01 * j as f64, -0.02, 0.03)).collect(),
            translation: Vec3::new(0.1, 0.2, 2.0),
        };
        let (a, b) = (m.forward(&p).unwrap(), back.forward(&p).unwrap());
        for (x, y) in a.mesh.vertices.iter().zip(&b.mesh.vertices) {
            assert!((x - y).norm() < 1e-5);
        }
    }

    #[test]
    fn params_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let mut p = toy_chain().rest_params();
        p.theta[1] = Vec3::new(0.1, -0.25, 0.5);
        p.save(&path).unwrap();
        assert_eq!(BodyParams::load(&path).unwrap(), p);
    }

    #[test]
    fn occluded_quad_is_invisible() {
        let near = quad(-1.0, 1.0, -1.0, 1.0, 0.0);
        let far = quad(-0.5, 0.5, -0.5, 0.5, 1.0);
        let mesh = near.merged(&far);
        let cam = Camera::pinhole(40.0, 40.0, 32.0, 32.0).looking_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y());
        let vis = partition_visibility(&mesh, &cam, 64, 64);
        assert_eq!(vis.visible, vec![0, 1]);
        assert_eq!(vis.invisible, vec![2, 3]);
    }

    #[test]
    fn single_triangle_fully_visible() {
        let tri = TriMesh::new(vec![Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)], vec![[0, 1, 2]]).unwrap();
        let cam = Camera::pinhole(20.0, 20.0, 16.0, 16.0).looking_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y());
        let vis = partition_visibility(&tri, &cam, 32, 32);
        assert_eq!(vis.visible, vec![0]);
        assert!(vis.invisible.is_empty());
    }

    #[test]
    fn orthographic_keypoints_shift_linearly() {
        let m = toy_chain();
        let cam = Camera::orthographic(0.01, 50.0, 50.0).looking_at(Vec3::new(0.3, 0.0, -2.0), Vec3::new(0.3, 0.0, 0.0), Vec3::y());
        let p0 = m.rest_params();
        let mut p1 = p0.clone();
        p1.translation.x += 0.1;
        let k0 = project_keypoints(&m, &p0, &cam).unwrap();
        let k1 = project_keypoints(&m, &p1, &cam).unwrap();
        for (a, b) in k0.iter().zip(&k1) {
            assert!(((a[0] - b[0]).abs() - 10.0).abs() < 1e-9);
            assert!((a[1] - b[1]).abs() < 1e-9);
        }
    }
}
