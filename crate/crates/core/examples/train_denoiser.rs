//! Overfit the compact denoiser on sphere / capsule scenes and compare
//! reverse samples against an untrained network.
//!
//! cargo run --release --example train_denoiser -- [pairs] [steps] [T] [lr]
//!
//! A negative `lr` selects Adam with step size `|lr|`.

use std::time::Instant;

use hap::diffusion::{generate, prepare_pair, train, CompactDenoiser, GenerateConfig, NoiseSchedule, OptimizerConfig, TrainConfig};
use hap::geom::chamfer;
use hap::rng::derive_seed;
use hap::synth::primitive_pairs;

fn main() -> hap::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let n_pairs = arg(1, 20.0) as usize;
    let steps = arg(2, 3000.0) as usize;
    let t = arg(3, 100.0) as usize;
    let lr = arg(4, 1e-3) as f32;

    let pairs = primitive_pairs(n_pairs, 2048, 48, 7)?;
    let cfg = TrainConfig {
        steps,
        optimizer: if lr < 0.0 {
            OptimizerConfig::Adam {
                lr: -lr,
                beta1: 0.9,
                beta2: 0.999,
            }
        } else {
            OptimizerConfig::Momentum { lr, momentum: 0.9 }
        },
        ..TrainConfig::default()
    };
    let prepared = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| prepare_pair(p, cfg.n_partial, cfg.n_body, derive_seed(1, &format!("pair/{i}"))))
        .collect::<hap::Result<Vec<_>>>()?;
    let schedule = NoiseSchedule::linear(t)?;

    let start = Instant::now();
    let trained = train(&schedule, &prepared, &cfg, 5, |s, l| {
        if s % (steps / 10).max(1) == 0 {
            println!("step {s:>6}  loss {l:.4}");
        }
    })?;
    println!("trained {steps} steps in {:.1}s", start.elapsed().as_secs_f64());

    let mut net_cfg = cfg.net;
    net_cfg.steps = t;
    let untrained = CompactDenoiser::new(net_cfg, derive_seed(5, "train/init"));
    let gen = GenerateConfig {
        n_points: 2048,
        n_partial: cfg.n_partial,
        n_body: cfg.n_body,
        ..GenerateConfig::default()
    };
    let (mut cd_t, mut cd_u) = (0.0, 0.0);
    for (i, p) in pairs.iter().enumerate() {
        let a = generate(&trained, &schedule, &p.partial, &p.body, &gen, i as u64)?;
        let b = generate(&untrained, &schedule, &p.partial, &p.body, &gen, i as u64)?;
        cd_t += chamfer(&a, &p.target)?;
        if std::env::var("DEBUG_TERMS").is_ok() {
            let (ab, ba) = hap::geom::chamfer_terms(&a.positions, &p.target.positions)?;
            let idx = hap::geom::SpatialIndex::new(&p.target.positions);
            let mut d: Vec<f64> = a.positions.iter().map(|q| idx.nearest(q).1.sqrt()).collect();
            d.sort_by(f64::total_cmp);
            let q = |f: f64| d[((d.len() - 1) as f64 * f) as usize];
            println!("pair {i}: gen->gt {ab:.5} gt->gen {ba:.5}  |d| q50 {:.3} q90 {:.3} q99 {:.3}", q(0.5), q(0.9), q(0.99));
        }
        cd_u += chamfer(&b, &p.target)?;
    }
    let n = pairs.len() as f64;
    println!("mean chamfer: trained {:.5}, untrained {:.5}, ratio {:.3}", cd_t / n, cd_u / n, cd_t / cd_u);
    Ok(())
}
