//! Client for an external screened-Poisson surface reconstruction binary.
//!
//! The tool is invoked as `<bin> --in <cloud.ply> --out <mesh.ply> --depth <d>`
//! (the PoissonRecon command line), with an oriented binary PLY as input.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{HapError, Result};
use crate::geom::{PointCloud, TriMesh};
use crate::io::{read_ply_mesh, write_ply_cloud, PlyFormat};

/// Argument list passed to the meshing tool.
pub fn poisson_args(input: &Path, output: &Path, depth: u32) -> Vec<String> {
    vec![
        "--in".into(),
        input.display().to_string(),
        "--out".into(),
        output.display().to_string(),
        "--depth".into(),
        depth.to_string(),
    ]
}

fn tool_err(bin: &Path, message: impl Into<String>, stderr: String) -> HapError {
    HapError::ExternalTool {
        tool: bin.display().to_string(),
        message: message.into(),
        stderr,
    }
}

/// Mesh an oriented cloud with the external tool. A missing executable is an
/// [`HapError::MissingFile`]; a failing one an [`HapError::ExternalTool`]
/// carrying its stderr.
pub fn mesh_external(cloud: &PointCloud, poisson_bin: &Path, depth: u32, timeout: Duration) -> Result<TriMesh> {
    if cloud.normals.is_none() {
        return Err(HapError::invalid("meshing needs an oriented cloud (normals missing)"));
    }
    if !poisson_bin.exists() && which(poisson_bin).is_none() {
        return Err(HapError::MissingFile(poisson_bin.to_path_buf()));
    }
    let dir = std::env::temp_dir().join(format!("hap-poisson-{}-{}", std::process::id(), unique()));
    std::fs::create_dir_all(&dir)?;
    let result = run_tool(cloud, poisson_bin, depth, timeout, &dir);
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn run_tool(cloud: &PointCloud, bin: &Path, depth: u32, timeout: Duration, dir: &Path) -> Result<TriMesh> {
    let input = dir.join("in.ply");
    let output = dir.join("out.ply");
    write_ply_cloud(&input, cloud, PlyFormat::BinaryLittleEndian)?;
    let stderr_path = dir.join("stderr.txt");
    let mut child = Command::new(bin)
        .args(poisson_args(&input, &output, depth))
        .stdout(Stdio::null())
        .stderr(std::fs::File::create(&stderr_path)?)
        .spawn()
        .map_err(|e| tool_err(bin, format!("could not start: {e}"), String::new()))?;
    let start = Instant::now();
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break s;
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            let _ = child.wait();
            let stderr = std::fs::read_to_string(&stderr_path).unwrap_or_default();
            return Err(tool_err(bin, format!("timed out after {:?}", timeout), stderr));
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    let stderr = std::fs::read_to_string(&stderr_path).unwrap_or_default();
    if !status.success() {
        return Err(tool_err(bin, format!("exited with {status}"), stderr));
    }
    let mesh = read_ply_mesh(&output).map_err(|e| tool_err(bin, format!("unreadable output: {e}"), stderr.clone()))?;
    mesh.validate()
        .map_err(|e| tool_err(bin, format!("invalid output mesh: {e}"), stderr.clone()))?;
    if mesh.faces.is_empty() {
        return Err(tool_err(bin, "output mesh has no faces", stderr));
    }
    Ok(mesh)
}

fn unique() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static N: AtomicU64 = AtomicU64::new(0);
    N.fetch_add(1, Ordering::Relaxed)
}

fn which(bin: &Path) -> Option<PathBuf> {
    if bin.components().count() != 1 {
        return None;
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|d| d.join(bin))
            .find(|p| p.is_file())
    })
}
