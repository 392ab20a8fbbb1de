//! Render a posed mannequin to a masked depth map, write it to disk, read it
//! back and lift it to a colored partial point cloud.
//!
//! cargo run --release -p hap --example lift_depth -- [out_dir]

use std::path::PathBuf;

use hap::body::mannequin;
use hap::camera::Camera;
use hap::depth::{unproject, DepthMap};
use hap::io::{read_rgb_png, write_ply_cloud, PlyFormat};
use hap::rng::rng_from_seed;
use hap::synth::{default_camera, random_params, BodyScene};

fn main() -> hap::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/lift".into()));
    let model = mannequin();
    let params = random_params(&model, 0.2, 0.5, &mut rng_from_seed(3));
    let scene = BodyScene::render(&model, &params, &default_camera(256), 256)?;
    let inputs = scene.write_inputs(&out, &params)?;

    let camera = Camera::load(inputs.camera.as_ref().unwrap())?;
    let depth = DepthMap::load(inputs.depth.as_ref().unwrap(), inputs.mask.as_ref().unwrap(), Some(camera))?;
    let rgb = read_rgb_png(inputs.rgb.as_ref().unwrap())?;
    let cloud = unproject(&depth, Some(&rgb))?;
    let b = cloud.bounds().expect("non-empty");
    println!(
        "{}x{} depth, {} valid pixels -> {} points, bounds {:.3?} .. {:.3?}",
        depth.width,
        depth.height,
        depth.valid_count(),
        cloud.len(),
        b.min.as_slice(),
        b.max.as_slice()
    );
    write_ply_cloud(&out.join("partial.ply"), &cloud, PlyFormat::BinaryLittleEndian)?;
    println!("wrote {}", out.join("partial.ply").display());
    Ok(())
}
