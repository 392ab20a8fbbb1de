//! File formats: PLY and OBJ for clouds and meshes, PFM for float grids, PNG
//! for masks, RGB images and 16-bit depth.

mod image_io;
mod obj;
mod pfm;
mod ply;

pub use image_io::{read_depth_png16, read_mask_png, read_rgb_png, write_mask_png, write_rgb_png};
pub use obj::{read_obj, write_obj};
pub use pfm::{read_pfm, write_pfm, FloatImage};
pub use ply::{read_ply_cloud, read_ply_mesh, write_ply_cloud, write_ply_mesh, PlyFormat};

use std::path::Path;

use crate::error::{HapError, Result};
use crate::geom::TriMesh;

/// Read a mesh from `.ply` or `.obj`, chosen by extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    match extension(path).as_str() {
        "obj" => read_obj(path),
        "ply" => read_ply_mesh(path),
        other => Err(HapError::invalid(format!(
            "unsupported mesh extension `{other}` for {}",
            path.display()
        ))),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    match extension(path).as_str() {
        "obj" => write_obj(path, mesh),
        _ => write_ply_mesh(path, mesh, PlyFormat::BinaryLittleEndian),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub(crate) fn open_err(path: &Path, e: std::io::Error) -> HapError {
    if e.kind() == std::io::ErrorKind::NotFound {
        HapError::MissingFile(path.to_path_buf())
    } else {
        e.into()
    }
}
