//! End-to-end orchestration: lift → rectify → generate → refine → replace →
//! mesh → eval, with every artifact checksummed in `manifest.json` so an
//! interrupted or edited run resumes from the first stale stage.

mod poisson;

pub use poisson::{mesh_external, poisson_args};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::body::{self, BodyParams, LBSBodyModel};
use crate::camera::Camera;
use crate::depth::{unproject, DepthMap};
use crate::diffusion::{generate, CompactDenoiser, GenerateConfig, NoiseSchedule};
use crate::error::{HapError, Result};
use crate::eval::{evaluate, EvalReport};
use crate::geom::{PointCloud, SpatialIndex, TriMesh, TriangleBvh, Vec3};
use crate::io::{read_mask_png, read_mesh, read_ply_cloud, read_ply_mesh, read_rgb_png, write_ply_cloud, write_ply_mesh, PlyFormat};
use crate::rectify::{rectify_logged, Mask, RectifyConfig};
use crate::refine::{depth_replace, median_spacing, refine, DisplacementNet, RefineConfig, RefineMode};
use crate::rng::{derive_seed, stage_rng};

pub const STAGES: [&str; 7] = ["lift", "rectify", "generate", "refine", "replace", "mesh", "eval"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub depth: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    /// Camera JSON; optional when the depth PNG carries a sidecar.
    pub camera: Option<PathBuf>,
    pub rgb: Option<PathBuf>,
    /// Body-model JSON; the built-in mannequin when absent.
    pub model: Option<PathBuf>,
    /// Initial body parameters; the rest pose when absent.
    pub init_params: Option<PathBuf>,
    pub denoiser: Option<PathBuf>,
    pub refiner: Option<PathBuf>,
    /// Ground-truth mesh for the eval stage.
    pub gt_mesh: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub rectify: bool,
    pub generate: bool,
    pub refine: bool,
    pub replace: bool,
    pub mesh: bool,
    pub eval: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            rectify: true,
            generate: true,
            refine: true,
            replace: true,
            mesh: true,
            eval: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub poisson_bin: Option<PathBuf>,
    pub poisson_depth: u32,
    pub timeout_secs: u64,
    /// Neighbors per local-plane normal fit.
    pub normal_k: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            poisson_bin: None,
            poisson_depth: 8,
            timeout_secs: 600,
            normal_k: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub samples: usize,
    pub normal_res: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 100_000,
            normal_res: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub inputs: Inputs,
    pub stages: StageToggles,
    pub rectify: RectifyConfig,
    pub generate: GenerateConfig,
    pub refine: RefineConfig,
    /// Learned refinement needs `inputs.refiner`; closed-form otherwise.
    pub refine_mode: Option<RefineMode>,
    pub mesh: MeshConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            inputs: Inputs::default(),
            stages: StageToggles::default(),
            rectify: RectifyConfig::default(),
            generate: GenerateConfig::default(),
            refine: RefineConfig::default(),
            refine_mode: None,
            mesh: MeshConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| HapError::parse("pipeline config", e.to_string()))
    }

    /// Parse a TOML file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| crate::io::open_err(path, e))?;
        let mut cfg = Self::from_toml_str(&s)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HapError::invalid(format!("config not serializable: {e}")))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        let i = &mut self.inputs;
        for p in [
            &mut i.depth,
            &mut i.mask,
            &mut i.camera,
            &mut i.rgb,
            &mut i.model,
            &mut i.init_params,
            &mut i.denoiser,
            &mut i.refiner,
            &mut i.gt_mesh,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(p) = self.mesh.poisson_bin.as_mut() {
            // bare names are looked up on PATH
            if p.components().count() > 1 {
                fix(p);
            }
        }
    }

    /// Sub-configs are valid and every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        self.rectify.validate()?;
        self.refine.validate()?;
        let i = &self.inputs;
        if i.depth.is_none() || i.mask.is_none() {
            return Err(HapError::invalid("inputs.depth and inputs.mask are required"));
        }
        for p in [&i.depth, &i.mask, &i.camera, &i.rgb, &i.model, &i.init_params, &i.denoiser, &i.refiner, &i.gt_mesh]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(HapError::MissingFile(p.clone()));
            }
        }
        if self.refine_mode == Some(RefineMode::Learned) && i.refiner.is_none() {
            return Err(HapError::invalid("refine_mode = \"learned\" needs inputs.refiner"));
        }
        if self.mesh.normal_k < 3 {
            return Err(HapError::invalid("mesh.normal_k must be at least 3"));
        }
        Ok(())
    }
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| crate::io::open_err(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash over the stage name, its configuration and its input digests.
    pub fingerprint: String,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        match std::fs::read_to_string(path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| HapError::parse("manifest.json", e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(e.into()),
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

/// What happened to each stage in one invocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
    Disabled,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub stages: Vec<(String, StageStatus)>,
    pub report: Option<EvalReport>,
}

impl RunSummary {
    pub fn status(&self, stage: &str) -> Option<StageStatus> {
        self.stages.iter().find(|(s, _)| s == stage).map(|(_, st)| *st)
    }
}

struct Runner {
    dir: PathBuf,
    manifest: Manifest,
    log: std::fs::File,
    statuses: Vec<(String, StageStatus)>,
}

/// Fingerprint token for an optional input file.
fn input_token(p: Option<&PathBuf>) -> Result<String> {
    match p {
        Some(p) => file_sha256(p),
        None => Ok("none".into()),
    }
}

impl Runner {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn note(&mut self, line: &str) {
        log::info!("{line}");
        let _ = writeln!(self.log, "{line}");
    }

    /// Run `body` unless the recorded fingerprint matches and every recorded
    /// output is still on disk with its recorded digest. `body` returns the
    /// artifact names it wrote.
    fn stage(
        &mut self,
        name: &str,
        tokens: &[String],
        body: impl FnOnce(&Path) -> Result<Vec<&'static str>>,
    ) -> Result<()> {
        let mut h = Sha256::new();
        h.update(name.as_bytes());
        for t in tokens {
            h.update([0u8]);
            h.update(t.as_bytes());
        }
        let fingerprint: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        if let Some(rec) = self.manifest.stages.get(name) {
            if rec.fingerprint == fingerprint
                && rec
                    .outputs
                    .iter()
                    .all(|(f, d)| file_sha256(&self.path(f)).is_ok_and(|x| &x == d))
            {
                self.note(&format!("[{name}] up to date"));
                self.statuses.push((name.into(), StageStatus::UpToDate));
                return Ok(());
            }
        }
        self.manifest.stages.remove(name);
        let start = Instant::now();
        let outputs = body(&self.dir).map_err(|e| HapError::stage(name, e))?;
        let mut rec = StageRecord {
            fingerprint,
            outputs: BTreeMap::new(),
        };
        for f in outputs {
            rec.outputs.insert(f.to_string(), file_sha256(&self.path(f))?);
        }
        self.manifest.stages.insert(name.into(), rec);
        self.manifest.save(&self.path("manifest.json"))?;
        self.note(&format!("[{name}] done in {:.2}s", start.elapsed().as_secs_f64()));
        self.statuses.push((name.into(), StageStatus::Ran));
        Ok(())
    }

    fn digest(&self, name: &str) -> Result<String> {
        file_sha256(&self.path(name))
    }

    fn disabled(&mut self, name: &str) {
        self.note(&format!("[{name}] disabled"));
        self.statuses.push((name.into(), StageStatus::Disabled));
    }
}

fn load_model(p: Option<&PathBuf>) -> Result<LBSBodyModel> {
    match p {
        Some(p) => body::load_model(p),
        None => Ok(body::mannequin()),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn write_cloud(path: &Path, pc: &PointCloud) -> Result<()> {
    write_ply_cloud(path, pc, PlyFormat::BinaryLittleEndian)
}

/// Run the whole pipeline into `cfg.out_dir`.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let dir = cfg.out_dir.clone();
    let manifest = Manifest::load(&dir.join("manifest.json"))?;
    let log = std::fs::OpenOptions::new().create(true).append(true).open(dir.join("log.txt"))?;
    let mut r = Runner {
        dir,
        manifest,
        log,
        statuses: Vec::new(),
    };
    r.note(&format!("run seed={} out={}", cfg.seed, r.dir.display()));
    std::fs::write(r.path("config.toml"), cfg.to_toml_string()?)?;
    let inputs = &cfg.inputs;
    let seed = cfg.seed;

    // lift
    let tokens = vec![
        input_token(inputs.depth.as_ref())?,
        input_token(inputs.mask.as_ref())?,
        input_token(inputs.camera.as_ref())?,
        input_token(inputs.rgb.as_ref())?,
    ];
    r.stage("lift", &tokens, |dir| {
        let camera = inputs.camera.as_deref().map(Camera::load).transpose()?;
        let depth = DepthMap::load(inputs.depth.as_deref().expect("validated"), inputs.mask.as_deref().expect("validated"), camera)?;
        let rgb = inputs.rgb.as_deref().map(read_rgb_png).transpose()?;
        let partial = unproject(&depth, rgb.as_ref())?;
        if partial.is_empty() {
            return Err(HapError::invalid("mask selects no pixel with valid depth"));
        }
        write_cloud(&dir.join("partial.ply"), &partial)?;
        depth.camera.save(&dir.join("camera.json"))?;
        Ok(vec!["partial.ply", "camera.json"])
    })?;

    // rectify
    let tokens = vec![
        r.digest("partial.ply")?,
        r.digest("camera.json")?,
        input_token(inputs.mask.as_ref())?,
        input_token(inputs.model.as_ref())?,
        input_token(inputs.init_params.as_ref())?,
        json(&cfg.rectify),
        cfg.stages.rectify.to_string(),
    ];
    r.stage("rectify", &tokens, |dir| {
        let model = load_model(inputs.model.as_ref())?;
        let params0 = match &inputs.init_params {
            Some(p) => BodyParams::load(p)?,
            None => model.rest_params(),
        };
        let params = if cfg.stages.rectify {
            let partial = read_ply_cloud(&dir.join("partial.ply"))?;
            let camera = Camera::load(&dir.join("camera.json"))?;
            let (w, h, m) = read_mask_png(inputs.mask.as_deref().expect("validated"))?;
            let mask = Mask::new(w, h, m)?;
            let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("rectify_log.csv"))?);
            let p = rectify_logged(&model, &params0, &partial, &camera, &mask, &cfg.rectify, &mut csv)?;
            csv.flush()?;
            p
        } else {
            std::fs::write(dir.join("rectify_log.csv"), "")?;
            params0
        };
        params.save(&dir.join("params.json"))?;
        let mesh = model.forward(&params)?.mesh;
        write_ply_mesh(&dir.join("body.ply"), &mesh, PlyFormat::BinaryLittleEndian)?;
        Ok(vec!["params.json", "body.ply", "rectify_log.csv"])
    })?;

    // generate
    let use_net = cfg.stages.generate && inputs.denoiser.is_some();
    let tokens = vec![
        r.digest("partial.ply")?,
        r.digest("body.ply")?,
        input_token(inputs.denoiser.as_ref().filter(|_| use_net))?,
        json(&cfg.generate),
        seed.to_string(),
    ];
    r.stage("generate", &tokens, |dir| {
        let partial = read_ply_cloud(&dir.join("partial.ply"))?;
        let body = read_ply_mesh(&dir.join("body.ply"))?;
        let coarse = if use_net {
            let den = CompactDenoiser::load(inputs.denoiser.as_deref().expect("checked"))?;
            let schedule = NoiseSchedule::linear(den.net.config.steps)?;
            generate(&den, &schedule, &partial, &body, &cfg.generate, derive_seed(seed, "generate"))?
        } else {
            // no generator: the partial cloud plus body-surface samples
            let mut rng = stage_rng(seed, "generate/body");
            let samples = body.sample_cloud(cfg.generate.n_points, &mut rng)?;
            let p = PointCloud::from_positions(partial.positions.clone());
            p.concat(&samples)
        };
        write_cloud(&dir.join("coarse.ply"), &coarse)?;
        Ok(vec!["coarse.ply"])
    })?;

    // refine
    let mode = cfg.refine_mode.unwrap_or(if inputs.refiner.is_some() {
        RefineMode::Learned
    } else {
        RefineMode::ClosedForm
    });
    let tokens = vec![
        r.digest("coarse.ply")?,
        r.digest("partial.ply")?,
        r.digest("body.ply")?,
        input_token(inputs.refiner.as_ref().filter(|_| mode == RefineMode::Learned))?,
        json(&cfg.refine),
        json(&mode),
        cfg.stages.refine.to_string(),
        seed.to_string(),
    ];
    r.stage("refine", &tokens, |dir| {
        let coarse = read_ply_cloud(&dir.join("coarse.ply"))?;
        let refined = if cfg.stages.refine {
            let partial = read_ply_cloud(&dir.join("partial.ply"))?;
            let body = read_ply_mesh(&dir.join("body.ply"))?;
            let net = match mode {
                RefineMode::Learned => Some(DisplacementNet::load(inputs.refiner.as_deref().expect("validated"))?),
                RefineMode::ClosedForm => None,
            };
            refine(&coarse, &partial, &body, &cfg.refine, net.as_ref(), derive_seed(seed, "refine"))?
        } else {
            coarse
        };
        write_cloud(&dir.join("refined.ply"), &refined)?;
        Ok(vec!["refined.ply"])
    })?;

    // replace
    let tokens = vec![
        r.digest("refined.ply")?,
        r.digest("partial.ply")?,
        json(&cfg.refine),
        cfg.stages.replace.to_string(),
    ];
    r.stage("replace", &tokens, |dir| {
        let refined = read_ply_cloud(&dir.join("refined.ply"))?;
        let fin = if cfg.stages.replace {
            let partial = read_ply_cloud(&dir.join("partial.ply"))?;
            depth_replace(&refined, &partial, &cfg.refine)?.cloud
        } else {
            refined
        };
        write_cloud(&dir.join("final.ply"), &fin)?;
        Ok(vec!["final.ply"])
    })?;

    // mesh
    let mut surface = None;
    if cfg.stages.mesh {
        let poisson = cfg.mesh.poisson_bin.clone();
        let tokens = vec![
            r.digest("final.ply")?,
            r.digest("body.ply")?,
            json(&cfg.mesh),
        ];
        let mut downgraded = false;
        r.stage("mesh", &tokens, |dir| {
            let fin = read_ply_cloud(&dir.join("final.ply"))?;
            let body = read_ply_mesh(&dir.join("body.ply"))?;
            let oriented = orient_normals(&fin, &body, cfg.mesh.normal_k)?;
            write_cloud(&dir.join("oriented.ply"), &oriented)?;
            let _ = std::fs::remove_file(dir.join("mesh.ply"));
            let Some(bin) = poisson else {
                downgraded = true;
                return Ok(vec!["oriented.ply"]);
            };
            match mesh_external(&oriented, &bin, cfg.mesh.poisson_depth, Duration::from_secs(cfg.mesh.timeout_secs)) {
                Ok(mesh) => {
                    write_ply_mesh(&dir.join("mesh.ply"), &mesh, PlyFormat::BinaryLittleEndian)?;
                    Ok(vec!["oriented.ply", "mesh.ply"])
                }
                Err(HapError::MissingFile(p)) => {
                    log::warn!("meshing binary {} not found", p.display());
                    downgraded = true;
                    Ok(vec!["oriented.ply"])
                }
                Err(e) => Err(e),
            }
        })?;
        if downgraded {
            r.note("[mesh] no meshing binary: output is an oriented point cloud only");
        }
        surface = Some(if r.path("mesh.ply").is_file() { "mesh.ply" } else { "oriented.ply" });
    } else {
        r.disabled("mesh");
    }

    // eval
    let mut report = None;
    match (&inputs.gt_mesh, cfg.stages.eval) {
        (Some(gt_path), true) => {
            let source = surface.unwrap_or("final.ply");
            let tokens = vec![
                r.digest(source)?,
                source.to_string(),
                input_token(Some(gt_path))?,
                json(&cfg.eval),
                seed.to_string(),
            ];
            r.stage("eval", &tokens, |dir| {
                let gt = read_mesh(gt_path)?;
                let (rec, note) = if source == "mesh.ply" {
                    (read_ply_mesh(&dir.join(source))?, "surface: poisson mesh")
                } else {
                    let mut cloud = read_ply_cloud(&dir.join(source))?;
                    if cloud.normals.is_none() {
                        let body = read_ply_mesh(&dir.join("body.ply"))?;
                        cloud = orient_normals(&cloud, &body, cfg.mesh.normal_k)?;
                    }
                    (surfel_mesh(&cloud)?, "surface: surfel splats of the oriented cloud (no meshing binary)")
                };
                let mut rep = evaluate(&rec, &gt, cfg.eval.samples, derive_seed(seed, "eval"), cfg.eval.normal_res)?;
                rep.notes = if rep.notes.is_empty() {
                    note.to_string()
                } else {
                    format!("{}; {note}", rep.notes)
                };
                std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&rep)?)?;
                Ok(vec!["report.json"])
            })?;
            let s = std::fs::read_to_string(r.path("report.json"))?;
            report = Some(serde_json::from_str(&s)?);
        }
        _ => r.disabled("eval"),
    }

    Ok(RunSummary {
        out_dir: r.dir.clone(),
        stages: r.statuses,
        report,
    })
}

/// Local-plane normals (self plus `k` nearest neighbors), each flipped to
/// point away from the nearest point on `body`.
pub fn orient_normals(cloud: &PointCloud, body: &TriMesh, k: usize) -> Result<PointCloud> {
    let bvh = TriangleBvh::new(body);
    plane_normals(cloud, k, |p| match bvh.closest(p) {
        Some((f, sp)) => {
            let d = p - sp.point;
            if d.norm() > 1e-9 {
                d
            } else {
                body.face_cross(f)
            }
        }
        None => Vec3::zeros(),
    })
}

/// Local-plane normals flipped away from the cloud's centroid; for clouds
/// that come without a body surface.
pub fn orient_normals_outward(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let c = cloud.centroid().unwrap_or_else(Vec3::zeros);
    plane_normals(cloud, k, |p| p - c)
}

fn plane_normals(cloud: &PointCloud, k: usize, away: impl Fn(&Vec3) -> Vec3 + Sync) -> Result<PointCloud> {
    if cloud.len() < 3 {
        return Err(HapError::invalid("normal estimation needs at least 3 points"));
    }
    let k = k.min(cloud.len() - 1);
    let index = SpatialIndex::new(&cloud.positions);
    let normals = cloud
        .positions
        .par_iter()
        .map(|p| -> Result<Vec3> {
            let idx = index.knn(p, k + 1)?;
            let (_, n) = crate::refine::local_plane(&cloud.positions, &idx);
            Ok(if n.dot(&away(p)) < 0.0 { -n } else { n })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud {
        positions: cloud.positions.clone(),
        colors: cloud.colors.clone(),
        normals: Some(normals),
    })
}

/// One small square per oriented point, sized by the median point spacing;
/// a stand-in surface for evaluation when no mesher is available.
pub fn surfel_mesh(cloud: &PointCloud) -> Result<TriMesh> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| HapError::invalid("surfels need normals"))?;
    let h = 0.75 * median_spacing(&cloud.positions).max(1e-6);
    let mut vertices = Vec::with_capacity(cloud.len() * 4);
    let mut faces = Vec::with_capacity(cloud.len() * 2);
    for (p, n) in cloud.positions.iter().zip(normals) {
        let n = n.try_normalize(1e-12).unwrap_or(Vec3::z());
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = n.cross(&helper).normalize() * h;
        let v = n.cross(&u);
        let b = vertices.len();
        vertices.extend([p - u - v, p + u - v, p + u + v, p - u + v]);
        faces.push([b, b + 1, b + 2]);
        faces.push([b, b + 2, b + 3]);
    }
    TriMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::uv_sphere;

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = PipelineConfig::default();
        c.seed = 7;
        c.refine_mode = Some(RefineMode::ClosedForm);
        c.mesh.poisson_bin = Some("PoissonRecon".into());
        let back = PipelineConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml_str("seeed = 1").is_err());
        assert!(PipelineConfig::from_toml_str("[rectify]\nlambda9 = 1.0").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut c = PipelineConfig::from_toml_str("out_dir = \"o\"\n[inputs]\ndepth = \"d.pfm\"\nmask = \"/abs/m.png\"").unwrap();
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.out_dir, Path::new("/cfg/o"));
        assert_eq!(c.inputs.depth.as_deref(), Some(Path::new("/cfg/d.pfm")));
        assert_eq!(c.inputs.mask.as_deref(), Some(Path::new("/abs/m.png")));
    }

    #[test]
    fn missing_input_is_reported_before_any_stage() {
        let mut c = PipelineConfig::default();
        c.inputs.depth = Some("/nonexistent/depth.pfm".into());
        c.inputs.mask = Some("/nonexistent/mask.png".into());
        assert!(matches!(c.validate(), Err(HapError::MissingFile(_))));
    }

    #[test]
    fn normals_point_away_from_body() {
        let body = uv_sphere(Vec3::zeros(), 0.5, 16, 24);
        let outer = uv_sphere(Vec3::zeros(), 0.6, 20, 30);
        let cloud = PointCloud::from_positions(outer.vertices.clone());
        let o = orient_normals(&cloud, &body, 12).unwrap();
        for (p, n) in o.positions.iter().zip(o.normals.as_ref().unwrap()) {
            assert!(n.dot(&p.normalize()) > 0.9, "{p:?} {n:?}");
        }
    }

    #[test]
    fn surfels_cover_the_cloud() {
        let sphere = uv_sphere(Vec3::zeros(), 1.0, 24, 48);
        let mut rng = crate::rng::rng_from_seed(1);
        let pc = sphere.sample_cloud(4000, &mut rng).unwrap();
        let o = orient_normals(&pc, &uv_sphere(Vec3::zeros(), 0.9, 12, 24), 12).unwrap();
        let s = surfel_mesh(&o).unwrap();
        assert_eq!(s.faces.len(), 2 * pc.len());
        let cd = crate::eval::eval_cd(&s, &sphere, 20_000, 3).unwrap();
        assert!(cd < 1e-3, "cd {cd}");
    }
}
