//! Full pipeline on a synthetic mannequin scene: writes the inputs, runs
//! lift → rectify → generate → refine → replace → mesh → eval, then runs
//! again to show every stage is cached.
//!
//! cargo run --release -p hap --example end_to_end -- [out_dir]

use std::path::PathBuf;

use hap::body::mannequin;
use hap::geom::Vec3;
use hap::pipeline::{run, PipelineConfig};
use hap::rng::rng_from_seed;
use hap::synth::{default_camera, perturb, random_params, BodyScene};

fn main() -> hap::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/end_to_end".into()));
    std::fs::create_dir_all(&root)?;
    // absolute, so the written config.toml works from anywhere
    let root = root.canonicalize()?;
    let model = mannequin();
    let mut rng = rng_from_seed(21);
    let truth = random_params(&model, 0.15, 0.5, &mut rng);
    let init = perturb(&truth, 0.05, Vec3::new(0.0, 0.0, 0.05), &mut rng);
    let res = 128;
    let scene = BodyScene::render(&model, &truth, &default_camera(res), res)?;

    let mut cfg = PipelineConfig::default();
    cfg.inputs = scene.write_inputs(&root.join("inputs"), &init)?;
    cfg.out_dir = root.join("run");
    cfg.rectify.iters = 400;
    cfg.generate.n_points = 6000;
    cfg.eval.samples = 50_000;
    std::fs::write(root.join("config.toml"), cfg.to_toml_string()?)?;
    println!("config: {} (rerun with `hap run --config` on it)", root.join("config.toml").display());

    for pass in ["first", "second"] {
        let t = std::time::Instant::now();
        let summary = run(&cfg)?;
        println!("{pass} run ({:.1}s):", t.elapsed().as_secs_f64());
        for (stage, status) in &summary.stages {
            println!("  {stage:9} {status:?}");
        }
        if let Some(r) = &summary.report {
            println!("  CD {:.3}  P2F {:.3}  normal {:.4}  ({})", r.cd, r.p2f, r.normal, r.notes);
        }
    }
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}
