//! Smooth a noisy generated cloud with the closed-form refinement, then swap
//! its camera-facing half for the denser depth points.
//!
//! s₃ only gathers depth points within the ball radius of s₂, and s₂ sits
//! where the kept generated points meet the scan, so the middle of the
//! observed region ends up covered only near that seam. The GT → cloud
//! term printed last shows the gap.
//!
//! cargo run --release -p hap --example refine_and_replace

use rand::Rng;
use rand_distr::Normal;

use hap::geom::{chamfer, chamfer_terms, uv_sphere, PointCloud, Vec3};
use hap::refine::{depth_replace, refine, RefineConfig};
use hap::rng::rng_from_seed;

fn main() -> hap::Result<()> {
    let mut rng = rng_from_seed(4);
    let sphere = uv_sphere(Vec3::zeros(), 0.5, 96, 128);
    let gt = sphere.sample_cloud(100_000, &mut rng)?;

    // a "generated" cloud: right shape, noisy surface
    let noise = Normal::new(0.0, 0.01).unwrap();
    let coarse = PointCloud::from_positions(
        sphere
            .sample_cloud(10_000, &mut rng)?
            .positions
            .iter()
            .map(|p| p + Vec3::from_fn(|_, _| rng.sample(noise)))
            .collect(),
    );
    // a "depth scan": dense, exact, front half only (camera on +z)
    let partial = PointCloud::from_positions(
        sphere.sample_cloud(40_000, &mut rng)?.positions.into_iter().filter(|p| p.z > 0.1).collect(),
    );

    let cfg = RefineConfig::default();
    let refined = refine(&coarse, &partial, &sphere, &cfg, None, 0)?;
    println!("chamfer to GT: coarse {:.3e}, refined {:.3e}", chamfer(&coarse, &gt)?, chamfer(&refined, &gt)?);

    let rep = depth_replace(&refined, &partial, &cfg)?;
    println!(
        "replacement (r = {:.4} m, k = {}): |s1| = {} generated points dropped, |s2| = {}, |s3| = {} depth points added",
        rep.radius,
        cfg.k_replace,
        rep.s1.len(),
        rep.s2.len(),
        rep.s3.len()
    );
    let (to_gt, from_gt) = chamfer_terms(&rep.cloud.positions, &gt.positions)?;
    println!(
        "final cloud: {} points, chamfer to GT {:.3e} (cloud → GT {to_gt:.3e}, GT → cloud {from_gt:.3e})",
        rep.cloud.len(),
        to_gt + from_gt
    );
    Ok(())
}
