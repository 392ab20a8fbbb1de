//! Perturb a mannequin's pose and depth, then pull it back onto the depth
//! scan with the registration objective.
//!
//! cargo run --release -p hap --example rectify_recover -- [trials] [mu_kp] [iters] [res]

use hap::body::mannequin;
use hap::geom::Vec3;
use hap::rectify::{RectifyConfig, RectifyProblem};
use hap::rng::{derive_seed, rng_from_seed};
use hap::synth::{default_camera, perturb, random_params, BodyScene};

fn main() -> hap::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut cfg = RectifyConfig::default();
    if let Some(mu) = args.get(2).and_then(|s| s.parse().ok()) {
        cfg.mu_kp = mu;
    }
    if let Some(it) = args.get(3).and_then(|s| s.parse().ok()) {
        cfg.iters = it;
    }
    let model = mannequin();
    let res: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(96);
    let camera = default_camera(res);
    for trial in 0..trials {
        let mut rng = rng_from_seed(derive_seed(7, &format!("trial/{trial}")));
        let truth = random_params(&model, 0.15, 0.5, &mut rng);
        let scene = BodyScene::render(&model, &truth, &camera, res)?;
        let start = perturb(&truth, 0.1, Vec3::new(0.0, 0.0, 0.1), &mut rng);
        let problem = RectifyProblem::new(&model, &start, &scene.partial, &camera, &scene.mask, cfg.clone())?;
        let before = problem.visible_p2f(&start)?;
        let t0 = std::time::Instant::now();
        let out = problem.solve(&start, None)?;
        let after = problem.visible_p2f(&out.params)?;
        println!(
            "trial {trial:2}: P2F {:.4} m -> {:.4} m ({:5.1}%), loss {:.5}, z {:+.4}, {:.1}s",
            before,
            after,
            100.0 * after / before,
            out.best_loss,
            out.params.translation.z - truth.translation.z,
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
