//! Pose the mannequin, split its faces into camera-visible and hidden sets,
//! project the joints, and write silhouette / depth / normal renders.
//!
//! cargo run --release -p hap --example pose_and_render -- [out_dir]

use std::path::PathBuf;

use hap::body::{mannequin, partition_visibility, project_keypoints};
use hap::geom::Vec3;
use hap::io::{write_ply_mesh, write_rgb_png, PlyFormat};
use hap::raster::{normal_map, rasterize};
use hap::synth::default_camera;

fn main() -> hap::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/pose".into()));
    std::fs::create_dir_all(&out)?;
    let model = mannequin();
    let mut p = model.rest_params();
    // raise the left shoulder, bend the right elbow, turn the head
    p.theta[16] = Vec3::new(0.0, 0.0, -0.9);
    p.theta[19] = Vec3::new(0.0, -1.2, 0.0);
    p.theta[15] = Vec3::new(0.0, 0.5, 0.0);
    p.beta[0] = 1.0;
    let posed = model.forward(&p)?;

    let res = 256;
    let cam = default_camera(res);
    let vis = partition_visibility(&posed.mesh, &cam, res, res);
    println!(
        "{} vertices, {} faces: {} visible, {} hidden",
        posed.mesh.vertices.len(),
        posed.mesh.faces.len(),
        vis.visible.len(),
        vis.invisible.len()
    );
    for (j, k) in project_keypoints(&model, &p, &cam)?.iter().enumerate().take(4) {
        println!("joint {j:2} -> pixel ({:.1}, {:.1})", k[0], k[1]);
    }

    let fb = rasterize(&posed.mesh, &cam, res, res);
    fb.save_silhouette_png(&out.join("silhouette.png"))?;
    fb.save_depth_pfm(&out.join("depth.pfm"))?;
    fb.save_face_id_png(&out.join("face_id.png"))?;
    let normals = normal_map(&posed.mesh, &cam, res, res);
    let img = image::RgbImage::from_fn(res as u32, res as u32, |x, y| {
        let n = normals[y as usize * res + x as usize];
        image::Rgb([0, 1, 2].map(|c| ((n[c] * 0.5 + 0.5) * 255.0).round() as u8))
    });
    write_rgb_png(&out.join("normals.png"), &img)?;
    write_ply_mesh(&out.join("posed.ply"), &posed.mesh, PlyFormat::Ascii)?;
    write_ply_mesh(&out.join("visible.ply"), &posed.mesh.with_faces(&vis.visible), PlyFormat::Ascii)?;
    println!("wrote renders to {}", out.display());
    Ok(())
}
