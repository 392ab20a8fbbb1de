//! Masked depth maps and their lifting to colored partial point clouds.

use std::path::Path;

use image::RgbImage;

use crate::camera::Camera;
use crate::error::{HapError, Result};
use crate::geom::{PointCloud, Vec3};
use crate::io::{read_depth_png16, read_mask_png, read_pfm, FloatImage};

/// Depth along camera z, row-major `height × width`, with a validity mask that
/// doubles as the human silhouette.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
    pub camera: Camera,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f64>, mask: Vec<bool>, camera: Camera) -> Result<Self> {
        if depth.len() != width * height || mask.len() != width * height {
            return Err(HapError::invalid(format!(
                "depth ({}) / mask ({}) do not match {width}x{height}",
                depth.len(),
                mask.len()
            )));
        }
        camera.validate()?;
        for (i, (&d, &m)) in depth.iter().zip(&mask).enumerate() {
            if m && !(d.is_finite() && d > 0.0) {
                return Err(HapError::invalid(format!(
                    "masked-in pixel ({}, {}) has invalid depth {d}",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(DepthMap {
            width,
            height,
            depth,
            mask,
            camera,
        })
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Load depth from `.pfm` or 16-bit `.png` (with `<png>.json` sidecar) and
    /// a mask PNG. An explicit `camera` wins over one in the sidecar. Pixels
    /// inside the mask with missing depth are dropped from the mask.
    pub fn load(depth_path: &Path, mask_path: &Path, camera: Option<Camera>) -> Result<DepthMap> {
        let ext = depth_path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let (w, h, depth, side_cam) = match ext.as_str() {
            "pfm" => {
                let img = read_pfm(depth_path)?;
                if img.channels != 1 {
                    return Err(HapError::invalid("depth PFM must have one channel"));
                }
                let d = img.data.iter().map(|&v| v as f64).collect();
                (img.width, img.height, d, None)
            }
            "png" => read_depth_png16(depth_path)?,
            other => return Err(HapError::invalid(format!("unsupported depth format `{other}`"))),
        };
        let camera = camera
            .or(side_cam)
            .ok_or_else(|| HapError::invalid("no camera given and none in the depth sidecar"))?;
        let (mw, mh, mut mask) = read_mask_png(mask_path)?;
        if (mw, mh) != (w, h) {
            return Err(HapError::invalid(format!(
                "mask is {mw}x{mh} but depth is {w}x{h}"
            )));
        }
        for (m, d) in mask.iter_mut().zip(&depth) {
            *m = *m && d.is_finite() && *d > 0.0;
        }
        DepthMap::new(w, h, depth, mask, camera)
    }

    pub fn to_float_image(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self
                .depth
                .iter()
                .zip(&self.mask)
                .map(|(&d, &m)| if m { d as f32 } else { 0.0 })
                .collect(),
        }
    }
}

/// One point per masked-in pixel, in row-major pixel order, transformed to
/// the world frame. Colors are copied from `rgb` when given.
pub fn unproject(d: &DepthMap, rgb: Option<&RgbImage>) -> Result<PointCloud> {
    if let Some(img) = rgb {
        if (img.width() as usize, img.height() as usize) != (d.width, d.height) {
            return Err(HapError::invalid(format!(
                "rgb is {}x{} but depth is {}x{}",
                img.width(),
                img.height(),
                d.width,
                d.height
            )));
        }
    }
    let mut positions = Vec::with_capacity(d.valid_count());
    let mut colors = rgb.map(|_| Vec::with_capacity(d.valid_count()));
    for v in 0..d.height {
        for u in 0..d.width {
            let i = v * d.width + u;
            if !d.mask[i] {
                continue;
            }
            positions.push(d.camera.unproject(u as f64, v as f64, d.depth[i]));
            if let (Some(cs), Some(img)) = (colors.as_mut(), rgb) {
                let p = img.get_pixel(u as u32, v as u32).0;
                cs.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0);
            }
        }
    }
    PointCloud::new(positions, colors, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Isometry3, Point3};

    fn flat(w: usize, h: usize, z: f64, cam: Camera) -> DepthMap {
        DepthMap::new(w, h, vec![z; w * h], vec![true; w * h], cam).unwrap()
    }

    #[test]
    fn principal_pixel_lifts_onto_axis() {
        let d = flat(5, 5, 2.5, Camera::pinhole(10.0, 10.0, 2.0, 2.0));
        let pc = unproject(&d, None).unwrap();
        assert_eq!(pc.len(), 25);
        assert_eq!(pc.positions[2 * 5 + 2], Vec3::new(0.0, 0.0, 2.5));
    }

    #[test]
    fn empty_mask_and_dimension_checks() {
        let cam = Camera::orthographic(0.01, 1.0, 1.0);
        let d = DepthMap::new(3, 3, vec![1.0; 9], vec![false; 9], cam.clone()).unwrap();
        assert!(unproject(&d, None).unwrap().is_empty());
        let rgb = RgbImage::new(2, 3);
        assert!(unproject(&d, Some(&rgb)).is_err());
        assert!(DepthMap::new(3, 3, vec![-1.0; 9], vec![true; 9], cam).is_err());
    }

    #[test]
    fn colors_follow_pixels() {
        let mut rgb = RgbImage::new(2, 1);
        rgb.put_pixel(1, 0, image::Rgb([255, 0, 51]));
        let d = DepthMap::new(2, 1, vec![1.0, 1.0], vec![false, true], Camera::pinhole(1.0, 1.0, 0.0, 0.0)).unwrap();
        let pc = unproject(&d, Some(&rgb)).unwrap();
        assert_eq!(pc.colors.unwrap(), vec![Vec3::new(1.0, 0.0, 0.2)]);
    }

    #[test]
    fn pose_moves_cloud_rigidly() {
        let base = flat(4, 3, 1.7, Camera::pinhole(20.0, 22.0, 1.5, 1.0));
        let iso = Isometry3::new(Vec3::new(0.3, -1.0, 2.0), Vec3::new(0.1, 0.7, -0.4));
        let mut moved = base.clone();
        moved.camera = moved.camera.with_pose(iso);
        let a = unproject(&base, None).unwrap();
        let b = unproject(&moved, None).unwrap();
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!((iso.transform_point(&Point3::from(*p)).coords - q).norm() < 1e-12);
        }
    }
}
