//! Why the keypoint weight is small by default: its curvature grows with
//! (focal / depth)², so at unit weight the default step throws the body
//! away within a few iterations, and a step small enough to stay stable
//! barely moves the geometry terms.
//!
//! cargo run --release -p hap --example keypoint_weight

use hap::body::mannequin;
use hap::geom::Vec3;
use hap::rectify::{RectifyConfig, RectifyProblem};
use hap::rng::rng_from_seed;
use hap::synth::{default_camera, perturb, random_params, BodyScene};

fn main() -> hap::Result<()> {
    let model = mannequin();
    let res = 96;
    let camera = default_camera(res);
    let mut rng = rng_from_seed(2);
    let truth = random_params(&model, 0.15, 0.5, &mut rng);
    let scene = BodyScene::render(&model, &truth, &camera, res)?;
    let start = perturb(&truth, 0.1, Vec3::new(0.0, 0.0, 0.1), &mut rng);

    for (mu_kp, lr) in [(1e-4, 0.03), (1.0, 0.03), (1.0, 3e-5)] {
        let cfg = RectifyConfig {
            mu_kp,
            lr,
            iters: 600,
            ..RectifyConfig::default()
        };
        let problem = RectifyProblem::new(&model, &start, &scene.partial, &camera, &scene.mask, cfg)?;
        let before = problem.visible_p2f(&start)?;
        match problem.solve(&start, None) {
            Ok(out) => println!(
                "mu_kp {mu_kp:<6} lr {lr:<6}: P2F {before:.4} -> {:.4} m",
                problem.visible_p2f(&out.params)?
            ),
            Err(e) => println!("mu_kp {mu_kp:<6} lr {lr:<6}: {e}"),
        }
    }
    Ok(())
}
