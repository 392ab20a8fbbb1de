//! Post-generation refinement: per-point displacements with a neighborhood
//! smoothness prior, and depth replacement, which swaps generated points in
//! the observed region for the denser depth-deduced ones.

mod replace;

use nalgebra::{Matrix3, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use replace::{depth_replace, median_spacing, Replacement};

use crate::diffusion::{assemble_condition, Condition, NetConfig, Optimizer, OptimizerConfig, PointNet};
use crate::error::{HapError, Result};
use crate::geom::{chamfer_terms, Normalization, PointCloud, SpatialIndex, TriMesh, Vec3};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Smoothness weight.
    pub alpha: f64,
    /// Neighbors per point for smoothness and plane fits.
    pub k_s: usize,
    /// Ball-query cap for depth replacement.
    pub k_replace: usize,
    /// Ball radius (m); `None` uses 4 × the median NN spacing of the cloud.
    pub r_replace: Option<f64>,
    /// Passes of the closed-form plane projection.
    pub closed_form_iters: usize,
    /// Condition sizes for the learned predictor.
    pub n_partial: usize,
    pub n_body: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            alpha: 0.1,
            k_s: 16,
            k_replace: 30,
            r_replace: None,
            closed_form_iters: 2,
            n_partial: 2048,
            n_body: 1024,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || self.k_s == 0 || self.k_replace == 0 {
            return Err(HapError::invalid("alpha must be ≥ 0 and k_s, k_replace ≥ 1"));
        }
        if let Some(r) = self.r_replace {
            if !(r > 0.0) {
                return Err(HapError::invalid("r_replace must be positive"));
            }
        }
        Ok(())
    }
}

/// `k` nearest neighbors of every point, itself excluded.
pub fn neighborhoods(base: &[Vec3], k: usize) -> Result<Vec<Vec<usize>>> {
    if k >= base.len() {
        return Err(HapError::invalid(format!(
            "k_s = {k} needs more than {} points",
            base.len()
        )));
    }
    let index = SpatialIndex::new(base);
    base.par_iter()
        .enumerate()
        .map(|(x, p)| {
            let mut nn = index.knn(p, k + 1)?;
            match nn.iter().position(|&i| i == x) {
                Some(pos) => {
                    nn.remove(pos);
                }
                None => {
                    nn.pop();
                }
            }
            Ok(nn)
        })
        .collect()
}

/// (1 / 3·N·K) Σ_x Σ_{x′ ∈ N(x)} ‖δ_x − δ_x′‖² over `k_s`-NN of `base`.
pub fn smoothness(delta: &[Vec3], base: &[Vec3], k_s: usize) -> Result<f64> {
    if delta.len() != base.len() {
        return Err(HapError::invalid("displacement count differs from the base cloud"));
    }
    let nbrs = neighborhoods(base, k_s)?;
    Ok(smoothness_with(delta, &nbrs))
}

fn smoothness_with(delta: &[Vec3], nbrs: &[Vec<usize>]) -> f64 {
    let k = nbrs.first().map_or(1, |n| n.len().max(1));
    let sum: f64 = nbrs
        .iter()
        .enumerate()
        .map(|(x, n)| n.iter().map(|&y| (delta[x] - delta[y]).norm_squared()).sum::<f64>())
        .sum();
    sum / (3.0 * delta.len() as f64 * k as f64)
}

fn smoothness_grad(delta: &[Vec3], nbrs: &[Vec<usize>]) -> Vec<Vec3> {
    let k = nbrs.first().map_or(1, |n| n.len().max(1));
    let c = 2.0 / (3.0 * delta.len() as f64 * k as f64);
    let mut g = vec![Vec3::zeros(); delta.len()];
    for (x, n) in nbrs.iter().enumerate() {
        for &y in n {
            let d = (delta[x] - delta[y]) * c;
            g[x] += d;
            g[y] -= d;
        }
    }
    g
}

/// D(ℋ, ℋ_gt) + α·R(Δ) with D the squared Chamfer distance and ℋ = base + Δ.
pub fn refine_objective(h: &PointCloud, h_gt: &PointCloud, delta: &[Vec3], base: &PointCloud, cfg: &RefineConfig) -> Result<f64> {
    let (ab, ba) = chamfer_terms(&h.positions, &h_gt.positions)?;
    let r = if cfg.alpha == 0.0 {
        0.0
    } else {
        smoothness(delta, &base.positions, cfg.k_s)?
    };
    Ok(ab + ba + cfg.alpha * r)
}

pub(crate) fn local_plane(points: &[Vec3], idx: &[usize]) -> (Vec3, Vec3) {
    let c = idx.iter().map(|&i| points[i]).sum::<Vec3>() / idx.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i] - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    (c, eig.eigenvectors.column(k).into_owned())
}

/// Closed-form displacements: each point moves by the mean of its offsets
/// onto the planes fitted around itself and its neighbors.
pub fn closed_form_displacements(points: &[Vec3], k_s: usize) -> Result<Vec<Vec3>> {
    let nbrs = neighborhoods(points, k_s)?;
    let planes: Vec<(Vec3, Vec3)> = nbrs
        .par_iter()
        .enumerate()
        .map(|(x, n)| {
            let mut idx = n.clone();
            idx.push(x);
            local_plane(points, &idx)
        })
        .collect();
    Ok(nbrs
        .par_iter()
        .enumerate()
        .map(|(x, n)| {
            let p = points[x];
            let offset = |(c, nrm): &(Vec3, Vec3)| -nrm * (p - c).dot(nrm);
            let sum = n.iter().map(|&y| offset(&planes[y])).sum::<Vec3>() + offset(&planes[x]);
            sum / (n.len() + 1) as f64
        })
        .collect())
}

/// Learned displacement predictor: the denoiser's network family without a
/// step input, starting from an all-zero output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementNet {
    pub net: PointNet,
}

fn to_array(points: &[Vec3]) -> Array2<f32> {
    Array2::from_shape_fn((points.len(), 3), |(i, c)| points[i][c] as f32)
}

impl DisplacementNet {
    pub fn new(mut config: NetConfig, seed: u64) -> Self {
        config.time_dims = 0;
        config.steps = 0;
        DisplacementNet {
            net: PointNet::new(config, true, &mut rng_from_seed(seed)),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let net = PointNet::load(path)?;
        if net.config.time_dims != 0 {
            return Err(HapError::parse("weights", "file holds a denoiser, not a displacement predictor"));
        }
        Ok(DisplacementNet { net })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.net.save(path)
    }

    /// Δ for `coarse` (normalized frame) given a normalized condition.
    pub fn predict(&self, coarse: &[Vec3], cond: &Condition) -> Vec<Vec3> {
        let g = self.net.encode_condition(&cond.features());
        let empty = ndarray::Array1::zeros(0);
        let out = self.net.predict_with_global(&to_array(coarse), &g, &empty);
        out.rows().into_iter().map(|r| Vec3::new(r[0] as f64, r[1] as f64, r[2] as f64)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineMode {
    Learned,
    ClosedForm,
}

/// ℋ = ℋ_coarse + Δ. Uses `weights` when given, the closed-form plane
/// projection otherwise.
pub fn refine(
    coarse: &PointCloud,
    partial: &PointCloud,
    body: &TriMesh,
    cfg: &RefineConfig,
    weights: Option<&DisplacementNet>,
    seed: u64,
) -> Result<PointCloud> {
    cfg.validate()?;
    if coarse.is_empty() {
        return Err(HapError::invalid("coarse cloud is empty"));
    }
    let positions = match weights {
        Some(net) => {
            let cond = assemble_condition(partial, body, cfg.n_partial.min(partial.len()), cfg.n_body, seed)?;
            let norm = cond.normalization()?;
            let x: Vec<Vec3> = coarse.positions.iter().map(|p| norm.apply(p)).collect();
            let delta = net.predict(&x, &cond.normalized(&norm));
            coarse.positions.iter().zip(&delta).map(|(p, d)| p + d * norm.scale).collect()
        }
        None => {
            let mut pts = coarse.positions.clone();
            for _ in 0..cfg.closed_form_iters {
                let d = closed_form_displacements(&pts, cfg.k_s.min(pts.len().saturating_sub(1)).max(1))?;
                pts.iter_mut().zip(&d).for_each(|(p, d)| *p += d);
            }
            pts
        }
    };
    Ok(PointCloud {
        positions,
        colors: coarse.colors.clone(),
        normals: None,
    })
}

/// One training example for the displacement predictor.
#[derive(Clone, Debug)]
pub struct RefinePair {
    pub coarse: PointCloud,
    pub target: PointCloud,
    pub partial: PointCloud,
    pub body: TriMesh,
}

/// A pair moved into its condition's normalized frame, with neighborhoods
/// and the target index precomputed.
pub struct PreparedRefinePair {
    pub coarse: Vec<Vec3>,
    pub target: Vec<Vec3>,
    pub cond: Condition,
    pub normalization: Normalization,
    nbrs: Vec<Vec<usize>>,
    target_index: SpatialIndex,
}

impl PreparedRefinePair {
    pub fn new(pair: &RefinePair, cfg: &RefineConfig, seed: u64) -> Result<Self> {
        let cond = assemble_condition(&pair.partial, &pair.body, cfg.n_partial.min(pair.partial.len()), cfg.n_body, seed)?;
        let norm = cond.normalization()?;
        let coarse: Vec<Vec3> = pair.coarse.positions.iter().map(|p| norm.apply(p)).collect();
        let target: Vec<Vec3> = pair.target.positions.iter().map(|p| norm.apply(p)).collect();
        Ok(PreparedRefinePair {
            nbrs: neighborhoods(&coarse, cfg.k_s)?,
            target_index: SpatialIndex::new(&target),
            coarse,
            target,
            cond: cond.normalized(&norm),
            normalization: norm,
        })
    }

    /// Objective (normalized frame) and its gradient on Δ.
    pub fn objective(&self, delta: &[Vec3], alpha: f64) -> (f64, Vec<Vec3>) {
        let h: Vec<Vec3> = self.coarse.iter().zip(delta).map(|(p, d)| p + d).collect();
        let (nh, nt) = (h.len() as f64, self.target.len() as f64);
        let mut g = vec![Vec3::zeros(); h.len()];
        let to_t: Vec<(usize, f64)> = h.par_iter().map(|p| self.target_index.nearest(p)).collect();
        let h_index = SpatialIndex::new(&h);
        let to_h: Vec<(usize, f64)> = self.target.par_iter().map(|p| h_index.nearest(p)).collect();
        let mut d = 0.0;
        for (i, (j, d2)) in to_t.iter().enumerate() {
            d += d2 / nh;
            g[i] += (h[i] - self.target[*j]) * (2.0 / nh);
        }
        for (t, (i, d2)) in self.target.iter().zip(&to_h) {
            d += d2 / nt;
            g[*i] += (h[*i] - t) * (2.0 / nt);
        }
        if alpha != 0.0 {
            d += alpha * smoothness_with(delta, &self.nbrs);
            for (gi, s) in g.iter_mut().zip(smoothness_grad(delta, &self.nbrs)) {
                *gi += s * alpha;
            }
        }
        (d, g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineTrainConfig {
    pub steps: usize,
    pub optimizer: OptimizerConfig,
    pub net: NetConfig,
}

impl Default for RefineTrainConfig {
    fn default() -> Self {
        RefineTrainConfig {
            steps: 1000,
            optimizer: OptimizerConfig::default(),
            net: NetConfig {
                time_dims: 0,
                steps: 0,
                ..NetConfig::default()
            },
        }
    }
}

/// Fit a displacement predictor to `pairs` by gradient descent on the
/// refinement objective. `on_step` sees every objective value.
pub fn train_refiner(
    pairs: &[PreparedRefinePair],
    alpha: f64,
    cfg: &RefineTrainConfig,
    seed: u64,
    mut on_step: impl FnMut(usize, f64),
) -> Result<DisplacementNet> {
    if pairs.is_empty() {
        return Err(HapError::invalid("no training data"));
    }
    let mut model = DisplacementNet::new(cfg.net, derive_seed(seed, "refine/init"));
    let mut opt = Optimizer::new(cfg.optimizer.clone(), &model.net);
    let mut rng = rng_from_seed(derive_seed(seed, "refine/order"));
    let empty = ndarray::Array1::zeros(0);
    for step in 0..cfg.steps {
        let pair = &pairs[if step < pairs.len() { step } else { rng.random_range(0..pairs.len()) }];
        let (out, tape) = model.net.forward(to_array(&pair.coarse), pair.cond.features(), empty.clone());
        let delta: Vec<Vec3> = out.rows().into_iter().map(|r| Vec3::new(r[0] as f64, r[1] as f64, r[2] as f64)).collect();
        let (obj, g) = pair.objective(&delta, alpha);
        if !obj.is_finite() {
            return Err(HapError::Divergence { iteration: step, loss: obj });
        }
        on_step(step, obj);
        let d_out = to_array(&g);
        let grads = model.net.backward(&tape, &d_out);
        opt.apply(&mut model.net, &grads);
    }
    Ok(model)
}
