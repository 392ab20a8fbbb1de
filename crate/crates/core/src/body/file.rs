//! `model.json` + `model.bin`: JSON header describing float32 / uint32
//! little-endian arrays stored back to back in the blob.
//!
//! ```json
//! {
//!   "format": "hap-lbs", "version": 1,
//!   "num_vertices": V, "num_faces": F, "num_joints": J, "num_betas": B,
//!   "parents": [-1, 0, ...],
//!   "blob": "model.bin",
//!   "arrays": [
//!     {"name": "template", "dtype": "f32", "shape": [V, 3], "offset": 0},
//!     {"name": "faces", "dtype": "u32", "shape": [F, 3], "offset": ...},
//!     {"name": "shape_dirs", "dtype": "f32", "shape": [V, 3, B], ...},
//!     {"name": "joint_regressor", "dtype": "f32", "shape": [J, V], ...},
//!     {"name": "skin_weights", "dtype": "f32", "shape": [V, J], ...}
//!   ]
//! }
//! ```
//!
//! Offsets are in bytes. Weight rows are renormalized after the float32
//! round trip.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LBSBodyModel;
use crate::error::{HapError, Result};
use crate::geom::Vec3;
use crate::io::open_err;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    num_vertices: usize,
    num_faces: usize,
    num_joints: usize,
    num_betas: usize,
    parents: Vec<i64>,
    blob: String,
    arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

pub fn save_model(model: &LBSBodyModel, json_path: &Path) -> Result<()> {
    let blob_name = json_path
        .with_extension("bin")
        .file_name()
        .and_then(|n| n.to_str())
        .map(str::to_owned)
        .ok_or_else(|| HapError::invalid("model path needs a file name"))?;
    let (v, j, b) = (model.num_vertices(), model.num_joints(), model.num_betas);
    let mut blob: Vec<u8> = Vec::new();
    let mut arrays = Vec::new();
    let mut push_f32 = |name: &str, shape: Vec<usize>, data: &mut dyn Iterator<Item = f64>, blob: &mut Vec<u8>| {
        arrays.push(ArrayEntry {
            name: name.into(),
            dtype: "f32".into(),
            shape,
            offset: blob.len(),
        });
        for x in data {
            blob.extend_from_slice(&(x as f32).to_le_bytes());
        }
    };
    push_f32("template", vec![v, 3], &mut model.template.iter().flat_map(|p| [p.x, p.y, p.z]), &mut blob);
    push_f32("shape_dirs", vec![v, 3, b], &mut model.shape_dirs.iter().copied(), &mut blob);
    push_f32("joint_regressor", vec![j, v], &mut model.joint_regressor.iter().copied(), &mut blob);
    push_f32("skin_weights", vec![v, j], &mut model.skin_weights.iter().copied(), &mut blob);
    arrays.push(ArrayEntry {
        name: "faces".into(),
        dtype: "u32".into(),
        shape: vec![model.faces.len(), 3],
        offset: blob.len(),
    });
    for f in &model.faces {
        for &i in f {
            blob.extend_from_slice(&(i as u32).to_le_bytes());
        }
    }
    let header = Header {
        format: "hap-lbs".into(),
        version: 1,
        num_vertices: v,
        num_faces: model.faces.len(),
        num_joints: j,
        num_betas: b,
        parents: model.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
        blob: blob_name.clone(),
        arrays,
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&header)?)?;
    std::fs::write(json_path.with_file_name(blob_name), blob)?;
    Ok(())
}

pub fn load_model(json_path: &Path) -> Result<LBSBodyModel> {
    let ctx = || format!("body model {}", json_path.display());
    let text = std::fs::read_to_string(json_path).map_err(|e| open_err(json_path, e))?;
    let h: Header = serde_json::from_str(&text).map_err(|e| HapError::parse(ctx(), e.to_string()))?;
    if h.format != "hap-lbs" || h.version != 1 {
        return Err(HapError::parse(ctx(), format!("unsupported format {} v{}", h.format, h.version)));
    }
    let blob_path = json_path.with_file_name(&h.blob);
    let blob = std::fs::read(&blob_path).map_err(|e| open_err(&blob_path, e))?;
    let find = |name: &str, shape: &[usize]| -> Result<&ArrayEntry> {
        let a = h
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| HapError::parse(ctx(), format!("missing array `{name}`")))?;
        if a.shape != shape {
            return Err(HapError::parse(ctx(), format!("array `{name}` has shape {:?}, expected {shape:?}", a.shape)));
        }
        let n: usize = shape.iter().product();
        if a.offset + 4 * n > blob.len() {
            return Err(HapError::parse(ctx(), format!("array `{name}` runs past the end of the blob")));
        }
        Ok(a)
    };
    let read_f32 = |a: &ArrayEntry| -> Vec<f64> {
        let n: usize = a.shape.iter().product();
        (0..n)
            .map(|k| f32::from_le_bytes(blob[a.offset + 4 * k..a.offset + 4 * k + 4].try_into().unwrap()) as f64)
            .collect()
    };
    let (v, j, b, f) = (h.num_vertices, h.num_joints, h.num_betas, h.num_faces);
    let t = read_f32(find("template", &[v, 3])?);
    let template = t.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    let shape_dirs = read_f32(find("shape_dirs", &[v, 3, b])?);
    let mut joint_regressor = read_f32(find("joint_regressor", &[j, v])?);
    let mut skin_weights = read_f32(find("skin_weights", &[v, j])?);
    for row in joint_regressor.chunks_mut(v) {
        renormalize(row);
    }
    for row in skin_weights.chunks_mut(j) {
        renormalize(row);
    }
    let fa = find("faces", &[f, 3])?;
    let faces = (0..f)
        .map(|k| {
            let idx = |c: usize| {
                let o = fa.offset + 4 * (3 * k + c);
                u32::from_le_bytes(blob[o..o + 4].try_into().unwrap()) as usize
            };
            [idx(0), idx(1), idx(2)]
        })
        .collect();
    let parents = h
        .parents
        .iter()
        .map(|&p| if p < 0 { None } else { Some(p as usize) })
        .collect();
    LBSBodyModel::new(template, faces, shape_dirs, b, joint_regressor, skin_weights, parents)
        .map_err(|e| HapError::parse(ctx(), e.to_string()))
}

fn renormalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 && (s - 1.0).abs() < 1e-4 {
        row.iter_mut().for_each(|w| *w /= s);
    }
}
