//! Score a reconstruction against ground truth: sampled Chamfer, P2F and the
//! four-view normal difference. With no arguments, compares a slightly
//! shrunken and shifted sphere against the original.
//!
//! cargo run --release -p hap --example evaluate_meshes -- [rec.ply gt.ply]

use hap::eval::evaluate;
use hap::geom::{uv_sphere, Vec3};
use hap::io::read_mesh;

fn main() -> hap::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let (rec, gt) = if args.len() >= 3 {
        (read_mesh(args[1].as_ref())?, read_mesh(args[2].as_ref())?)
    } else {
        (
            uv_sphere(Vec3::new(0.01, 0.0, 0.0), 0.49, 32, 48),
            uv_sphere(Vec3::zeros(), 0.5, 32, 48),
        )
    };
    let report = evaluate(&rec, &gt, 100_000, 0, 256)?;
    println!(
        "CD {:.3} ± {:.3}  P2F {:.3}  normal {:.4}\n  units: {}",
        report.cd, report.cd_stderr, report.p2f, report.normal, report.units
    );
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
