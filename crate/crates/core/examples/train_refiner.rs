//! Fit the learned displacement predictor on noisy primitive clouds and
//! compare it with the closed-form refinement.
//!
//! cargo run --release -p hap --example train_refiner -- [steps]

use rand::Rng;
use rand_distr::Normal;

use hap::geom::{chamfer, PointCloud, Vec3};
use hap::refine::{refine, train_refiner, PreparedRefinePair, RefineConfig, RefinePair, RefineTrainConfig};
use hap::rng::{derive_seed, rng_from_seed};
use hap::synth::primitive_pairs;

fn main() -> hap::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let noise = Normal::new(0.0, 0.015).unwrap();
    let mut rng = rng_from_seed(8);
    let pairs: Vec<RefinePair> = primitive_pairs(8, 2048, 48, 3)?
        .into_iter()
        .map(|p| {
            let coarse = PointCloud::from_positions(
                p.target.positions.iter().map(|x| x + Vec3::from_fn(|_, _| rng.sample(noise))).collect(),
            );
            RefinePair {
                coarse,
                target: p.target,
                partial: p.partial,
                body: p.body,
            }
        })
        .collect();
    let cfg = RefineConfig {
        n_partial: 512,
        n_body: 256,
        ..RefineConfig::default()
    };
    let prepared = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| PreparedRefinePair::new(p, &cfg, derive_seed(0, &format!("pair/{i}"))))
        .collect::<hap::Result<Vec<_>>>()?;
    let tcfg = RefineTrainConfig {
        steps,
        ..RefineTrainConfig::default()
    };
    let net = train_refiner(&prepared, cfg.alpha, &tcfg, 0, |s, obj| {
        if s % (steps / 6).max(1) == 0 {
            println!("step {s:5}  objective {obj:.5}");
        }
    })?;
    let (mut raw, mut learned, mut closed) = (0.0, 0.0, 0.0);
    for (i, p) in pairs.iter().enumerate() {
        raw += chamfer(&p.coarse, &p.target)?;
        learned += chamfer(&refine(&p.coarse, &p.partial, &p.body, &cfg, Some(&net), i as u64)?, &p.target)?;
        closed += chamfer(&refine(&p.coarse, &p.partial, &p.body, &cfg, None, i as u64)?, &p.target)?;
    }
    let n = pairs.len() as f64;
    println!(
        "mean chamfer: noisy {:.3e}, learned {:.3e}, closed-form {:.3e}",
        raw / n,
        learned / n,
        closed / n
    );
    Ok(())
}
