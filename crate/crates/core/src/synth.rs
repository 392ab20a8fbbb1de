//! Synthetic scenes: posed mannequins seen by a depth camera, and small
//! sphere / capsule datasets for training the point networks.

use image::RgbImage;
use nalgebra::{Rotation3, Unit};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::body::{BodyParams, LBSBodyModel};
use crate::camera::Camera;
use crate::depth::{unproject, DepthMap};
use crate::diffusion::TrainingPair;
use crate::error::Result;
use crate::geom::{uv_sphere, PointCloud, TriMesh, Vec3};
use crate::raster::{facing_normal, rasterize};
use crate::rectify::Mask;
use crate::rng::{derive_seed, rng_from_seed};

/// Pinhole camera 2.6 m in front of the mannequin, framing it at `res × res`.
pub fn default_camera(res: usize) -> Camera {
    let f = 1.1 * res as f64;
    let c = (res as f64 - 1.0) / 2.0;
    Camera::pinhole(f, f, c, c).looking_at(Vec3::new(0.0, -0.05, 2.6), Vec3::new(0.0, -0.05, 0.0), Vec3::y())
}

/// Depth of the nearest surface at each pixel center; uncovered pixels are
/// masked out.
pub fn render_depth(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> Result<DepthMap> {
    let fb = rasterize(mesh, camera, width, height);
    let mask = fb.mask();
    let depth = fb.depth.iter().zip(&mask).map(|(d, m)| if *m { *d } else { 0.0 }).collect();
    DepthMap::new(width, height, depth, mask, camera.clone())
}

/// Normal-shaded color image (black background).
pub fn render_shading(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> RgbImage {
    let fb = rasterize(mesh, camera, width, height);
    let mut img = RgbImage::new(width as u32, height as u32);
    for y in 0..height {
        for x in 0..width {
            let f = fb.face_id[y * width + x];
            if f < 0 {
                continue;
            }
            let n = facing_normal(mesh, f as usize, camera);
            let c = n.map(|v| ((0.5 + 0.5 * v) * 255.0).round().clamp(0.0, 255.0) as u8);
            img.put_pixel(x as u32, y as u32, image::Rgb([c.x, c.y, c.z]));
        }
    }
    img
}

/// A posed body observed by one depth camera.
#[derive(Clone, Debug)]
pub struct BodyScene {
    pub params: BodyParams,
    pub mesh: TriMesh,
    pub camera: Camera,
    pub depth: DepthMap,
    pub rgb: RgbImage,
    pub partial: PointCloud,
    pub mask: Mask,
}

impl BodyScene {
    pub fn render(model: &LBSBodyModel, params: &BodyParams, camera: &Camera, res: usize) -> Result<Self> {
        let mesh = model.forward(params)?.mesh;
        let depth = render_depth(&mesh, camera, res, res)?;
        let rgb = render_shading(&mesh, camera, res, res);
        let partial = unproject(&depth, Some(&rgb))?;
        let mask = Mask::new(res, res, depth.mask.clone())?;
        Ok(BodyScene {
            params: params.clone(),
            mesh,
            camera: camera.clone(),
            depth,
            rgb,
            partial,
            mask,
        })
    }
}

impl BodyScene {
    /// Write the scene as pipeline inputs into `dir`: `depth.pfm`,
    /// `mask.png`, `rgb.png`, `camera.json`, `init_params.json` (from
    /// `init`) and the ground-truth `gt.ply`.
    pub fn write_inputs(&self, dir: &std::path::Path, init: &BodyParams) -> Result<crate::pipeline::Inputs> {
        use crate::io::{write_mask_png, write_pfm, write_ply_mesh, write_rgb_png, PlyFormat};
        std::fs::create_dir_all(dir)?;
        let p = |n: &str| dir.join(n);
        write_pfm(&p("depth.pfm"), &self.depth.to_float_image())?;
        write_mask_png(&p("mask.png"), self.mask.width, self.mask.height, &self.mask.data)?;
        write_rgb_png(&p("rgb.png"), &self.rgb)?;
        self.camera.save(&p("camera.json"))?;
        init.save(&p("init_params.json"))?;
        write_ply_mesh(&p("gt.ply"), &self.mesh, PlyFormat::BinaryLittleEndian)?;
        Ok(crate::pipeline::Inputs {
            depth: Some(p("depth.pfm")),
            mask: Some(p("mask.png")),
            camera: Some(p("camera.json")),
            rgb: Some(p("rgb.png")),
            init_params: Some(p("init_params.json")),
            gt_mesh: Some(p("gt.ply")),
            ..Default::default()
        })
    }
}

/// Gaussian pose and shape draw around the rest pose. The root rotation is
/// left at zero so the body keeps facing the camera.
pub fn random_params<R: Rng>(model: &LBSBodyModel, pose_sigma: f64, beta_sigma: f64, rng: &mut R) -> BodyParams {
    let mut p = model.rest_params();
    let pose = Normal::new(0.0, pose_sigma.max(0.0)).unwrap();
    let shape = Normal::new(0.0, beta_sigma.max(0.0)).unwrap();
    for b in &mut p.beta {
        *b = shape.sample(rng);
    }
    for t in p.theta.iter_mut().skip(1) {
        *t = Vec3::new(pose.sample(rng), pose.sample(rng), pose.sample(rng));
    }
    p
}

/// Add N(0, σ²) to every pose coordinate and shift the translation.
pub fn perturb<R: Rng>(params: &BodyParams, pose_sigma: f64, translation: Vec3, rng: &mut R) -> BodyParams {
    let n = Normal::new(0.0, pose_sigma.max(0.0)).unwrap();
    let mut p = params.clone();
    for t in &mut p.theta {
        *t += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    p.translation += translation;
    p.wrap();
    p
}

/// Capsule around the segment `center ± half_len · axis`.
pub fn capsule(center: Vec3, axis: Vec3, half_len: f64, radius: f64, rings: usize, segments: usize) -> TriMesh {
    // an odd band count leaves no vertex ring on the equator, so the band
    // that straddles it becomes the cylinder
    let rings = rings.max(3) | 1;
    let mut m = uv_sphere(Vec3::zeros(), radius, rings, segments);
    for v in &mut m.vertices {
        v.z += half_len * v.z.signum();
    }
    let rot = Rotation3::rotation_between(&Vec3::z(), &axis)
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::x()), std::f64::consts::PI));
    m.map_vertices(|v| rot * v + center)
}

/// Sphere / capsule examples with a camera-side partial scan and a shrunken,
/// coarser proxy playing the body model.
pub fn primitive_pairs(count: usize, target_points: usize, res: usize, seed: u64) -> Result<Vec<TrainingPair>> {
    let camera = {
        let f = 1.2 * res as f64;
        let c = (res as f64 - 1.0) / 2.0;
        Camera::pinhole(f, f, c, c).looking_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y())
    };
    (0..count)
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, &format!("primitive/{i}")));
            let radius = rng.random_range(0.25..0.45);
            let center = Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
            let (shape, proxy) = if i % 2 == 0 {
                (uv_sphere(center, radius, 24, 32), uv_sphere(center, 0.9 * radius, 8, 12))
            } else {
                let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let axis = if axis.norm() < 1e-3 { Vec3::y() } else { axis.normalize() };
                let half = rng.random_range(0.15..0.35);
                (
                    capsule(center, axis, half, radius * 0.7, 17, 32),
                    capsule(center, axis, half, radius * 0.63, 7, 12),
                )
            };
            let target = shape.sample_cloud(target_points, &mut rng)?;
            let depth = render_depth(&shape, &camera, res, res)?;
            let rgb = render_shading(&shape, &camera, res, res);
            let partial = unproject(&depth, Some(&rgb))?;
            Ok(TrainingPair {
                target,
                partial,
                body: proxy,
            })
        })
        .collect()
}
