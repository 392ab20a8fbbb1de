//! The diffusion math with analytic denoisers: forward marginals, and
//! reverse sampling that collapses onto a point or reproduces a Gaussian.
//!
//! cargo run --release -p hap --example diffusion_oracles

use hap::diffusion::{
    forward_sample, reverse_sample, standard_normal, Condition, DeltaOracle, GaussianOracle, NoiseSchedule, VarianceKind,
};
use hap::geom::Vec3;
use hap::rng::rng_from_seed;

fn moments(xs: &[Vec3]) -> (Vec3, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<Vec3>() / n;
    (m, xs.iter().map(|x| (x - m).norm_squared()).sum::<f64>() / (3.0 * (n - 1.0)))
}

fn main() -> hap::Result<()> {
    let s = NoiseSchedule::linear(1000)?;
    let x0 = Vec3::new(1.0, -0.5, 0.25);
    let mut rng = rng_from_seed(0);
    println!("forward marginals of x0 = {:?}", x0.as_slice());
    for t in [1, 250, 500, 1000] {
        let eps = standard_normal(50_000, &mut rng);
        let (m, v) = moments(&forward_sample(&s, &vec![x0; eps.len()], t, &eps)?);
        println!(
            "  t={t:4}  ᾱ={:.5}  mean {:.4?} (want {:.4?})  var {:.5} (want {:.5})",
            s.alpha_bar_at(t),
            m.as_slice(),
            (x0 * s.alpha_bar_at(t).sqrt()).as_slice(),
            v,
            1.0 - s.alpha_bar_at(t)
        );
    }

    let cond = Condition {
        positions: vec![Vec3::zeros()],
        colors: vec![Vec3::zeros()],
        n_partial: 1,
    };
    let x_star = Vec3::new(0.2, 0.4, -0.6);
    let xs = reverse_sample(&DeltaOracle { x_star }, &NoiseSchedule::linear(50)?, &cond, 1000, 1, VarianceKind::Gamma);
    let worst = xs.iter().map(|x| (x - x_star).abs().max()).fold(0.0, f64::max);
    println!("δ data, T=50: worst coordinate error {worst:.2e}");

    let oracle = GaussianOracle {
        mean: Vec3::new(0.5, 0.0, -0.5),
        std: 0.3,
    };
    for variance in [VarianceKind::Gamma, VarianceKind::Posterior] {
        for t in [50, 1000] {
            let (m, v) = moments(&reverse_sample(&oracle, &NoiseSchedule::linear(t)?, &cond, 10_000, 2, variance));
            println!(
                "Gaussian data, T={t:4}, {variance:?}: mean {:.3?}, var {:.4} (target 0.09)",
                m.as_slice(),
                v
            );
        }
    }
    Ok(())
}
