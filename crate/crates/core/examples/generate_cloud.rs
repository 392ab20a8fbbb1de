//! Complete a partial scan with the conditional point denoiser.
//!
//! cargo run --release -p hap --example generate_cloud -- [weights.bin] [out.ply]
//!
//! Without weights a small denoiser is trained on a few primitive scenes
//! first (about ten seconds).

use std::path::PathBuf;

use hap::diffusion::{generate, prepare_pair, train, CompactDenoiser, GenerateConfig, NoiseSchedule, OptimizerConfig, TrainConfig};
use hap::geom::chamfer;
use hap::io::{write_ply_cloud, PlyFormat};
use hap::rng::derive_seed;
use hap::synth::primitive_pairs;

fn main() -> hap::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let out = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "out/coarse.ply".into()));
    let pairs = primitive_pairs(4, 2048, 48, 11)?;
    let (denoiser, schedule) = match args.get(1) {
        Some(w) => {
            let d = CompactDenoiser::load(w.as_ref())?;
            let s = NoiseSchedule::linear(d.net.config.steps)?;
            (d, s)
        }
        None => {
            let schedule = NoiseSchedule::linear(100)?;
            let cfg = TrainConfig {
                steps: 1500,
                optimizer: OptimizerConfig::Adam {
                    lr: 1e-3,
                    beta1: 0.9,
                    beta2: 0.999,
                },
                ..TrainConfig::default()
            };
            let prepared = pairs
                .iter()
                .enumerate()
                .map(|(i, p)| prepare_pair(p, cfg.n_partial, cfg.n_body, derive_seed(0, &format!("pair/{i}"))))
                .collect::<hap::Result<Vec<_>>>()?;
            let d = train(&schedule, &prepared, &cfg, 0, |s, l| {
                if s % 300 == 0 {
                    println!("step {s:5}  loss {l:.4}");
                }
            })?;
            (d, schedule)
        }
    };
    let gen = GenerateConfig {
        n_points: 4096,
        n_partial: 512,
        n_body: 256,
        ..GenerateConfig::default()
    };
    let pair = &pairs[0];
    let cloud = generate(&denoiser, &schedule, &pair.partial, &pair.body, &gen, 1)?;
    println!(
        "{} partial points -> {} generated; chamfer to the full shape {:.5} (partial alone {:.5})",
        pair.partial.len(),
        cloud.len(),
        chamfer(&cloud, &pair.target)?,
        chamfer(&pair.partial, &pair.target)?
    );
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_ply_cloud(&out, &cloud, PlyFormat::BinaryLittleEndian)?;
    println!("wrote {}", out.display());
    Ok(())
}
