use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hap::body::{self, BodyParams, LBSBodyModel};
use hap::camera::Camera;
use hap::depth::{unproject, DepthMap};
use hap::diffusion::{self, CompactDenoiser, GenerateConfig, NoiseSchedule, TrainConfig, VarianceKind};
use hap::eval::evaluate;
use hap::io::{read_mask_png, read_mesh, read_ply_cloud, read_ply_mesh, read_rgb_png, write_ply_cloud, write_ply_mesh, PlyFormat};
use hap::pipeline::{self, PipelineConfig};
use hap::rectify::{rectify, rectify_logged, Mask, RectifyConfig};
use hap::refine::{depth_replace, refine, DisplacementNet, RefineConfig};
use hap::{HapError, Result};

#[derive(Parser)]
#[command(name = "hap", version, about = "Single-view human reconstruction from depth via explicit point clouds")]
struct Cli {
    /// Root seed for every stochastic step (default 0; `run` keeps the
    /// config's seed unless this is given).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// error | warn | info | debug | trace
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lift a masked depth map to a partial point cloud.
    Lift {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        rgb: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pose the body model and write its mesh.
    Pose {
        /// Body-model JSON (built-in mannequin when omitted).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit body parameters to a partial cloud and silhouette.
    Rectify {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        partial: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// TOML with rectification weights and optimizer settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-iteration loss breakdown as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the conditional point denoiser.
    TrainDenoiser {
        /// Directory of NNNN_{target,partial,body}.ply triples.
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Train on this many generated sphere/capsule scenes instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long = "T", default_value_t = 1000)]
        t: usize,
        #[arg(long)]
        steps: Option<usize>,
        /// TOML training configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a complete cloud from a partial cloud and body mesh.
    Generate {
        #[arg(long)]
        denoiser: PathBuf,
        #[arg(long)]
        partial: PathBuf,
        #[arg(long)]
        body: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, value_enum, default_value = "gamma")]
        variance: Variance,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add per-point displacements to a coarse cloud.
    Refine {
        #[arg(long)]
        coarse: PathBuf,
        #[arg(long)]
        partial: PathBuf,
        #[arg(long)]
        body: PathBuf,
        #[arg(long, value_enum, default_value = "closed-form")]
        mode: Mode,
        /// Displacement-predictor weights (learned mode).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Swap generated points near the observed surface for observed ones.
    Replace {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        partial: PathBuf,
        #[arg(long, default_value_t = 30)]
        k: usize,
        /// Ball radius in meters (4× median spacing when omitted).
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chamfer, point-to-face and normal metrics against a ground-truth mesh.
    Eval {
        /// Mesh, or point cloud (evaluated through surfel splats).
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 256)]
        res: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the whole pipeline from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Variance {
    Gamma,
    Posterior,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Learned,
    ClosedForm,
}

fn load_model(p: Option<&Path>) -> Result<LBSBodyModel> {
    p.map_or_else(|| Ok(body::mannequin()), body::load_model)
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(p: Option<&Path>) -> Result<T> {
    let Some(p) = p else { return Ok(T::default()) };
    let s = std::fs::read_to_string(p).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HapError::MissingFile(p.to_path_buf()),
        _ => e.into(),
    })?;
    toml::from_str(&s).map_err(|e| HapError::parse(p.display().to_string(), e.to_string()))
}

fn write_cloud(p: &Path, pc: &hap::geom::PointCloud) -> Result<()> {
    write_ply_cloud(p, pc, PlyFormat::BinaryLittleEndian)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.cmd {
        Cmd::Lift {
            depth,
            mask,
            camera,
            rgb,
            out,
        } => {
            let camera = camera.as_deref().map(Camera::load).transpose()?;
            let d = DepthMap::load(&depth, &mask, camera)?;
            let rgb = rgb.as_deref().map(read_rgb_png).transpose()?;
            let pc = unproject(&d, rgb.as_ref())?;
            log::info!("{} points", pc.len());
            write_cloud(&out, &pc)
        }
        Cmd::Pose { model, params, out } => {
            let model = load_model(model.as_deref())?;
            let mesh = model.forward(&BodyParams::load(&params)?)?.mesh;
            write_ply_mesh(&out, &mesh, PlyFormat::BinaryLittleEndian)
        }
        Cmd::Rectify {
            model,
            init,
            partial,
            camera,
            mask,
            config,
            log,
            out,
        } => {
            let model = load_model(model.as_deref())?;
            let cfg: RectifyConfig = read_toml(config.as_deref())?;
            let params0 = BodyParams::load(&init)?;
            let partial = read_ply_cloud(&partial)?;
            let camera = Camera::load(&camera)?;
            let (w, h, m) = read_mask_png(&mask)?;
            let mask = Mask::new(w, h, m)?;
            let params = match log {
                Some(p) => {
                    let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
                    rectify_logged(&model, &params0, &partial, &camera, &mask, &cfg, &mut f)?
                }
                None => rectify(&model, &params0, &partial, &camera, &mask, &cfg)?,
            };
            params.save(&out)
        }
        Cmd::TrainDenoiser {
            data,
            synthetic,
            t,
            steps,
            config,
            out,
        } => {
            let mut cfg: TrainConfig = read_toml(config.as_deref())?;
            if let Some(s) = steps {
                cfg.steps = s;
            }
            let pairs = match (data, synthetic) {
                (Some(d), _) => diffusion::load_pairs(&d)?,
                (None, Some(n)) => hap::synth::primitive_pairs(n, 4096, 64, seed)?,
                (None, None) => return Err(HapError::invalid("pass --data or --synthetic")),
            };
            let schedule = NoiseSchedule::linear(t)?;
            let prepared = pairs
                .iter()
                .enumerate()
                .map(|(i, p)| diffusion::prepare_pair(p, cfg.n_partial, cfg.n_body, hap::rng::derive_seed(seed, &format!("pair/{i}"))))
                .collect::<Result<Vec<_>>>()?;
            let every = (cfg.steps / 20).max(1);
            let den = diffusion::train(&schedule, &prepared, &cfg, seed, |s, l| {
                if s % every == 0 {
                    log::info!("step {s}: loss {l:.5}");
                }
            })?;
            den.save(&out)
        }
        Cmd::Generate {
            denoiser,
            partial,
            body,
            n,
            variance,
            out,
        } => {
            let den = CompactDenoiser::load(&denoiser)?;
            let schedule = NoiseSchedule::linear(den.net.config.steps)?;
            let cfg = GenerateConfig {
                n_points: n,
                variance: match variance {
                    Variance::Gamma => VarianceKind::Gamma,
                    Variance::Posterior => VarianceKind::Posterior,
                },
                ..GenerateConfig::default()
            };
            let pc = diffusion::generate(&den, &schedule, &read_ply_cloud(&partial)?, &read_ply_mesh(&body)?, &cfg, seed)?;
            write_cloud(&out, &pc)
        }
        Cmd::Refine {
            coarse,
            partial,
            body,
            mode,
            weights,
            out,
        } => {
            let net = match (mode, weights) {
                (Mode::Learned, Some(w)) => Some(DisplacementNet::load(&w)?),
                (Mode::Learned, None) => return Err(HapError::invalid("--mode learned needs --weights")),
                (Mode::ClosedForm, _) => None,
            };
            let pc = refine(
                &read_ply_cloud(&coarse)?,
                &read_ply_cloud(&partial)?,
                &read_ply_mesh(&body)?,
                &RefineConfig::default(),
                net.as_ref(),
                seed,
            )?;
            write_cloud(&out, &pc)
        }
        Cmd::Replace {
            input,
            partial,
            k,
            radius,
            out,
        } => {
            let cfg = RefineConfig {
                k_replace: k,
                r_replace: radius,
                ..RefineConfig::default()
            };
            let r = depth_replace(&read_ply_cloud(&input)?, &read_ply_cloud(&partial)?, &cfg)?;
            log::info!(
                "radius {:.4} m: removed {} generated points, added {} observed points",
                r.radius,
                r.s1.len(),
                r.s3.len()
            );
            write_cloud(&out, &r.cloud)
        }
        Cmd::Eval {
            rec,
            gt,
            samples,
            res,
            json,
        } => {
            let mesh = read_mesh(&rec)?;
            let (mesh, note) = if mesh.faces.is_empty() {
                let pc = read_ply_cloud(&rec)?;
                let pc = if pc.normals.is_some() {
                    pc
                } else {
                    pipeline::orient_normals_outward(&pc, 16)?
                };
                (pipeline::surfel_mesh(&pc)?, Some("surface: surfel splats of the input cloud"))
            } else {
                (mesh, None)
            };
            let mut report = evaluate(&mesh, &read_mesh(&gt)?, samples, seed, res)?;
            if let Some(n) = note {
                report.notes = n.into();
            }
            println!(
                "CD {:.4} (±{:.4})  P2F {:.4}  normal {:.4}  [{}]",
                report.cd, report.cd_stderr, report.p2f, report.normal, report.units
            );
            if let Some(p) = json {
                std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(())
        }
        Cmd::Run { config, out_dir } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let summary = pipeline::run(&cfg)?;
            for (stage, status) in &summary.stages {
                println!("{stage:<9} {status:?}");
            }
            if let Some(r) = summary.report {
                println!("CD {:.4}  P2F {:.4}  normal {:.4}  [{}]", r.cd, r.p2f, r.normal, r.units);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
