use std::path::Path;

use image::{ImageBuffer, Luma, RgbImage};
use serde::Deserialize;

use super::open_err;
use crate::camera::{Camera, CameraJson};
use crate::error::{HapError, Result};

fn open(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(open_err(path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(image::open(path)?)
}

/// Any nonzero pixel (first channel) is inside the mask. Row-major.
pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.pixels().map(|p| p.0[0] > 0).collect()))
}

pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        width as u32,
        height as u32,
        mask.iter().map(|&m| if m { 255 } else { 0 }).collect(),
    )
    .ok_or_else(|| HapError::invalid("mask size does not match dimensions"))?;
    img.save(path)?;
    Ok(())
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    Ok(open(path)?.to_rgb8())
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DepthSidecar {
    scale: f64,
    camera: Option<CameraJson>,
}

/// 16-bit PNG depth plus a JSON sidecar `{ "scale": meters_per_unit,
/// "camera": {...} }` (sidecar at `<png>.json`). Zero counts as missing.
pub fn read_depth_png16(path: &Path) -> Result<(usize, usize, Vec<f64>, Option<Camera>)> {
    let img = open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    let sidecar_path = path.with_extension("png.json");
    let side: DepthSidecar = serde_json::from_str(
        &std::fs::read_to_string(&sidecar_path).map_err(|e| open_err(&sidecar_path, e))?,
    )
    .map_err(|e| HapError::parse(format!("depth sidecar {}", sidecar_path.display()), e.to_string()))?;
    if !(side.scale > 0.0) {
        return Err(HapError::parse("depth sidecar", "field `scale` must be > 0"));
    }
    let depth = img
        .pixels()
        .map(|p| {
            if p.0[0] == 0 {
                f64::NAN
            } else {
                p.0[0] as f64 * side.scale
            }
        })
        .collect();
    let camera = side.camera.map(CameraJson::into_camera).transpose()?;
    Ok((w as usize, h as usize, depth, camera))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_png16_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![0, 2000]).unwrap();
        img.save(&p).unwrap();
        std::fs::write(
            dir.path().join("d.png.json"),
            r#"{"scale": 0.001, "camera": {"model":"pinhole","fx":10,"fy":10,"cx":1,"cy":0}}"#,
        )
        .unwrap();
        let (w, h, d, cam) = read_depth_png16(&p).unwrap();
        assert_eq!((w, h), (2, 1));
        assert!(d[0].is_nan());
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert_eq!(cam.unwrap().fx, 10.0);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let mask = vec![true, false, false, true, true, false];
        write_mask_png(&p, 3, 2, &mask).unwrap();
        assert_eq!(read_mask_png(&p).unwrap(), (3, 2, mask));
    }
}
