use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::open_err;
use crate::error::{HapError, Result};
use crate::geom::{TriMesh, Vec3};

/// Wavefront OBJ: `v` and `f` records only; polygons are fan-triangulated,
/// `f` entries may carry `/vt/vn` suffixes and negative indices.
pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let ctx = || format!("OBJ {}", path.display());
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let xyz: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| HapError::parse(ctx(), format!("line {}: {e}", ln + 1)))?;
                if xyz.len() != 3 {
                    return Err(HapError::parse(ctx(), format!("line {}: short vertex", ln + 1)));
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut ids = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head
                        .parse()
                        .map_err(|_| HapError::parse(ctx(), format!("line {}: bad index `{t}`", ln + 1)))?;
                    let idx = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                    if idx < 0 {
                        return Err(HapError::parse(ctx(), format!("line {}: index out of range", ln + 1)));
                    }
                    ids.push(idx as usize);
                }
                if ids.len() < 3 {
                    return Err(HapError::parse(ctx(), format!("line {}: face needs 3 vertices", ln + 1)));
                }
                for k in 1..ids.len() - 1 {
                    faces.push([ids[0], ids[k], ids[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces).map_err(|e| HapError::parse(ctx(), e.to_string()))
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_slashes_and_negative_indices() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        std::fs::write(&p, "# q\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n").unwrap();
        let m = read_obj(&p).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        let q = dir.path().join("n.obj");
        write_obj(&q, &m).unwrap();
        assert_eq!(read_obj(&q).unwrap(), m);
    }
}
