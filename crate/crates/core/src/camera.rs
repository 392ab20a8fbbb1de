//! Pinhole and orthographic cameras. Pixel `(u, v)` maps through the
//! intrinsics directly (no half-pixel offset); camera frame is x right,
//! y down, z forward.

use std::path::Path;

use nalgebra::{Isometry3, Matrix2x3, Matrix3, Matrix4, Point3, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{HapError, Result};
use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraModel {
    Pinhole,
    Orthographic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub model: CameraModel,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Meters per pixel, orthographic only.
    pub pixel_size: f64,
    /// World-from-camera rigid transform.
    pub pose: Isometry3<f64>,
}

impl Camera {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Camera {
            model: CameraModel::Pinhole,
            fx,
            fy,
            cx,
            cy,
            pixel_size: 1.0,
            pose: Isometry3::identity(),
        }
    }

    pub fn orthographic(pixel_size: f64, cx: f64, cy: f64) -> Self {
        Camera {
            model: CameraModel::Orthographic,
            fx: 1.0,
            fy: 1.0,
            cx,
            cy,
            pixel_size,
            pose: Isometry3::identity(),
        }
    }

    pub fn with_pose(mut self, pose: Isometry3<f64>) -> Self {
        self.pose = pose;
        self
    }

    /// Place the camera at `eye` looking at `target`, with `up` mapping to
    /// image-up (negative v).
    pub fn looking_at(self, eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        self.with_pose(Isometry3::from_parts(
            Translation3::from(eye),
            UnitQuaternion::from_rotation_matrix(&r),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        match self.model {
            CameraModel::Pinhole => {
                for (name, f) in [("fx", self.fx), ("fy", self.fy)] {
                    if !(f > 0.0 && f.is_finite()) {
                        return Err(HapError::invalid(format!("field `{name}` must be a positive focal length, got {f}")));
                    }
                }
            }
            CameraModel::Orthographic => {
                if !(self.pixel_size > 0.0) {
                    return Err(HapError::invalid(format!("field `pixel_size` must be > 0, got {}", self.pixel_size)));
                }
            }
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(HapError::invalid("principal point must be finite"));
        }
        Ok(())
    }

    /// Same view at a different resolution: pixel coordinates scale by `s`.
    pub fn scaled(&self, s: f64) -> Camera {
        Camera {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            pixel_size: self.pixel_size / s,
            ..self.clone()
        }
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(&Point3::from(*world)).coords
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.pose.transform_point(&Point3::from(*cam)).coords
    }

    /// Camera-frame point to `(u, v, depth)`.
    pub fn project_camera(&self, pc: &Vec3) -> Result<(f64, f64, f64)> {
        match self.model {
            CameraModel::Pinhole => {
                if !(pc.z > 0.0) {
                    return Err(HapError::BehindCamera { z: pc.z });
                }
                Ok((
                    self.fx * pc.x / pc.z + self.cx,
                    self.fy * pc.y / pc.z + self.cy,
                    pc.z,
                ))
            }
            CameraModel::Orthographic => Ok((
                pc.x / self.pixel_size + self.cx,
                pc.y / self.pixel_size + self.cy,
                pc.z,
            )),
        }
    }

    /// World point to `(u, v, depth)`.
    pub fn project(&self, world: &Vec3) -> Result<(f64, f64, f64)> {
        self.project_camera(&self.to_camera(world))
    }

    /// Camera-frame point for pixel `(u, v)` at camera-z `depth`.
    pub fn unproject_camera(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        match self.model {
            CameraModel::Pinhole => Vec3::new(
                (u - self.cx) * depth / self.fx,
                (v - self.cy) * depth / self.fy,
                depth,
            ),
            CameraModel::Orthographic => Vec3::new(
                (u - self.cx) * self.pixel_size,
                (v - self.cy) * self.pixel_size,
                depth,
            ),
        }
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.to_world(&self.unproject_camera(u, v, depth))
    }

    /// World-space ray through pixel `(u, v)`: origin and unit direction.
    /// Points on it at parameter `s` have camera depth `s * dir_cam.z`.
    pub fn ray(&self, u: f64, v: f64) -> (Vec3, Vec3) {
        match self.model {
            CameraModel::Pinhole => {
                let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
                (
                    self.pose.translation.vector,
                    self.pose.rotation * d.normalize(),
                )
            }
            CameraModel::Orthographic => {
                let o = self.unproject_camera(u, v, 0.0);
                (self.to_world(&o), self.pose.rotation * Vec3::z())
            }
        }
    }

    /// Unit vector from a world point toward the camera.
    pub fn view_dir(&self, world: &Vec3) -> Vec3 {
        match self.model {
            CameraModel::Pinhole => (self.pose.translation.vector - world).normalize(),
            CameraModel::Orthographic => -(self.pose.rotation * Vec3::z()),
        }
    }

    /// Jacobian of `(u, v)` with respect to the world point.
    pub fn projection_jacobian(&self, world: &Vec3) -> Result<Matrix2x3<f64>> {
        let pc = self.to_camera(world);
        let r_t = self.pose.rotation.to_rotation_matrix().matrix().transpose();
        let j_cam = match self.model {
            CameraModel::Pinhole => {
                if !(pc.z > 0.0) {
                    return Err(HapError::BehindCamera { z: pc.z });
                }
                let iz = 1.0 / pc.z;
                Matrix2x3::new(
                    self.fx * iz,
                    0.0,
                    -self.fx * pc.x * iz * iz,
                    0.0,
                    self.fy * iz,
                    -self.fy * pc.y * iz * iz,
                )
            }
            CameraModel::Orthographic => {
                let s = 1.0 / self.pixel_size;
                Matrix2x3::new(s, 0.0, 0.0, 0.0, s, 0.0)
            }
        };
        Ok(j_cam * r_t)
    }

    pub fn from_json_str(s: &str) -> Result<Camera> {
        let raw: CameraJson = serde_json::from_str(s).map_err(|e| HapError::parse("camera JSON", e.to_string()))?;
        raw.into_camera()
    }

    pub fn load(path: &Path) -> Result<Camera> {
        let s = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                HapError::MissingFile(path.to_path_buf())
            } else {
                e.into()
            }
        })?;
        Camera::from_json_str(&s)
    }

    pub fn to_json(&self) -> CameraJson {
        let m = self.pose.to_homogeneous();
        let mut pose = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                pose[r * 4 + c] = m[(r, c)];
            }
        }
        CameraJson {
            model: Some(self.model),
            fx: Some(self.fx),
            fy: Some(self.fy),
            cx: Some(self.cx),
            cy: Some(self.cy),
            pixel_size: Some(self.pixel_size),
            pose: Some(pose.to_vec()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// On-disk camera: `{model, fx, fy, cx, cy, pixel_size, pose}` with `pose` a
/// 4×4 row-major world-from-camera matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub model: Option<CameraModel>,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    pub pixel_size: Option<f64>,
    pub pose: Option<Vec<f64>>,
}

impl CameraJson {
    pub fn into_camera(self) -> Result<Camera> {
        let field = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| HapError::parse("camera JSON", format!("missing field `{name}`")))
        };
        let model = self
            .model
            .ok_or_else(|| HapError::parse("camera JSON", "missing field `model`"))?;
        let cx = field("cx", self.cx)?;
        let cy = field("cy", self.cy)?;
        let mut cam = match model {
            CameraModel::Pinhole => Camera::pinhole(field("fx", self.fx)?, field("fy", self.fy)?, cx, cy),
            CameraModel::Orthographic => Camera::orthographic(field("pixel_size", self.pixel_size)?, cx, cy),
        };
        if let Some(p) = self.pose {
            cam.pose = pose_from_row_major(&p)?;
        }
        cam.validate().map_err(|e| HapError::parse("camera JSON", e.to_string()))?;
        Ok(cam)
    }
}

fn pose_from_row_major(p: &[f64]) -> Result<Isometry3<f64>> {
    let bad = |msg: String| HapError::parse("camera JSON", format!("field `pose`: {msg}"));
    if p.len() != 16 {
        return Err(bad(format!("expected 16 numbers, got {}", p.len())));
    }
    let m = Matrix4::from_row_slice(p);
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
    if (r.transpose() * r - Matrix3::identity()).abs().max() > 1e-8 || (r.determinant() - 1.0).abs() > 1e-8 {
        return Err(bad("rotation block is not orthonormal within 1e-8".into()));
    }
    if (m.fixed_view::<1, 4>(3, 0) - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).abs().max() > 1e-12 {
        return Err(bad("last row must be [0, 0, 0, 1]".into()));
    }
    let t = Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Ok(Isometry3::from_parts(Translation3::from(t), rot))
}
