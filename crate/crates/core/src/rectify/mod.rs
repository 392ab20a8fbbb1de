//! Registration of the body model to a depth-deduced partial cloud.
//!
//! The objective combines a squared point-to-face term against the visible
//! faces, a Chamfer term between visible vertices and the partial cloud, a
//! clamped repulsion from the invisible faces, a shape prior, and soft
//! keypoint / silhouette penalties. Gradients are assembled by hand and
//! pushed through [`LBSBodyModel::backward`].

mod silhouette;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use silhouette::{silhouette_loss_and_grad, soft_iou, soft_silhouette, SoftSilhouette};

use crate::body::{partition_visibility, BodyParams, LBSBodyModel, PosedBody, Visibility};
use crate::camera::Camera;
use crate::error::{HapError, Result};
use crate::geom::{point_to_mesh, PointCloud, SpatialIndex, TriangleBvh, Vec3};
use crate::raster::silhouette;
use std::sync::Mutex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectifyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    /// Keypoint penalty weight (px⁻²).
    pub mu_kp: f64,
    pub mu_sil: f64,
    pub lr: f64,
    pub momentum: f64,
    pub iters: usize,
    pub visibility_refresh: usize,
    /// Longer side of the visibility render; `None` renders at mask size.
    pub visibility_res: Option<usize>,
    /// Distance (m) beyond which the invisible-face repulsion saturates.
    pub repulsion_cap: f64,
    /// Soft-silhouette temperature (px).
    pub sil_temperature: f64,
    /// Faces are ignored at pixels farther than this many temperatures outside.
    pub sil_cutoff: f64,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        RectifyConfig {
            lambda1: 10.0,
            lambda2: 3.0,
            lambda3: 0.2,
            lambda4: 0.1,
            mu_kp: 1e-4,
            mu_sil: 0.0,
            lr: 0.03,
            momentum: 0.9,
            iters: 2000,
            visibility_refresh: 50,
            visibility_res: Some(512),
            repulsion_cap: 0.05,
            sil_temperature: 1.0,
            sil_cutoff: 30.0,
        }
    }
}

impl RectifyConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.mu_kp, self.mu_sil];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(HapError::invalid("loss weights must be finite and nonnegative"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(HapError::invalid("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(HapError::invalid("momentum must lie in [0, 1)"));
        }
        if self.iters == 0 || self.visibility_refresh == 0 {
            return Err(HapError::invalid("iters and visibility_refresh must be at least 1"));
        }
        if !(self.repulsion_cap > 0.0) || !(self.sil_temperature > 0.0) || !(self.sil_cutoff > 0.0) {
            return Err(HapError::invalid("repulsion_cap, sil_temperature and sil_cutoff must be positive"));
        }
        Ok(())
    }
}

/// Unweighted term values; `total` is the weighted objective.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossTerms {
    /// Mean squared distance from the partial cloud to the visible faces.
    pub p2f_visible: f64,
    /// Squared Chamfer between visible vertices and the partial cloud.
    pub chamfer: f64,
    /// Mean clamped squared distance to the invisible faces.
    pub p2f_invisible: f64,
    pub beta_sq: f64,
    /// Mean squared keypoint displacement (px²).
    pub keypoint: f64,
    /// `1 − softIoU`; zero when the silhouette weight is zero.
    pub silhouette: f64,
    /// Hard-mask IoU, only computed alongside the silhouette term.
    pub hard_iou: Option<f64>,
    pub total: f64,
}

impl LossTerms {
    pub const CSV_HEADER: &'static str = "iter,total,p2f_visible,chamfer,p2f_invisible,beta_sq,keypoint,silhouette,hard_iou";

    pub fn csv_row(&self, iter: usize) -> String {
        format!(
            "{iter},{},{},{},{},{},{},{},{}",
            self.total,
            self.p2f_visible,
            self.chamfer,
            self.p2f_invisible,
            self.beta_sq,
            self.keypoint,
            self.silhouette,
            self.hard_iou.map(|v| v.to_string()).unwrap_or_default()
        )
    }
}

/// Binary human mask at the resolution of the input camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(HapError::invalid(format!(
                "mask has {} entries, expected {width}×{height}",
                data.len()
            )));
        }
        Ok(Mask { width, height, data })
    }
}

const NO_HINT: usize = usize::MAX;

/// Everything fixed across iterations of one registration problem.
pub struct RectifyProblem<'a> {
    pub model: &'a LBSBodyModel,
    pub partial: &'a PointCloud,
    pub camera: &'a Camera,
    pub mask: &'a Mask,
    pub k0: Vec<[f64; 2]>,
    pub cfg: RectifyConfig,
    partial_index: SpatialIndex,
    vis_camera: Camera,
    vis_size: (usize, usize),
    // last closest visible / invisible face per partial point; only speeds
    // up the exact searches
    hints: Mutex<(Vec<usize>, Vec<usize>)>,
}

impl<'a> RectifyProblem<'a> {
    /// `k0` is taken from `params0`.
    pub fn new(
        model: &'a LBSBodyModel,
        params0: &BodyParams,
        partial: &'a PointCloud,
        camera: &'a Camera,
        mask: &'a Mask,
        cfg: RectifyConfig,
    ) -> Result<Self> {
        let k0 = crate::body::project_keypoints(model, params0, camera)?;
        Self::with_keypoints(model, k0, partial, camera, mask, cfg)
    }

    pub fn with_keypoints(
        model: &'a LBSBodyModel,
        k0: Vec<[f64; 2]>,
        partial: &'a PointCloud,
        camera: &'a Camera,
        mask: &'a Mask,
        cfg: RectifyConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        camera.validate()?;
        if partial.is_empty() {
            return Err(HapError::invalid("partial cloud is empty"));
        }
        if k0.len() != model.num_joints() {
            return Err(HapError::invalid("keypoint count differs from the joint count"));
        }
        let (vis_camera, vis_size) = match cfg.visibility_res {
            Some(r) if r != mask.width.max(mask.height) => {
                let s = r as f64 / mask.width.max(mask.height) as f64;
                let w = ((mask.width as f64 * s).round() as usize).max(1);
                let h = ((mask.height as f64 * s).round() as usize).max(1);
                (camera.scaled(s), (w, h))
            }
            _ => (camera.clone(), (mask.width, mask.height)),
        };
        Ok(RectifyProblem {
            model,
            partial,
            camera,
            mask,
            k0,
            cfg,
            partial_index: SpatialIndex::new(&partial.positions),
            vis_camera,
            vis_size,
            hints: Mutex::new((vec![NO_HINT; partial.len()], vec![NO_HINT; partial.len()])),
        })
    }

    pub fn visibility(&self, params: &BodyParams) -> Result<Visibility> {
        let posed = self.model.forward(params)?;
        Ok(self.visibility_of(&posed))
    }

    fn visibility_of(&self, posed: &PosedBody) -> Visibility {
        partition_visibility(&posed.mesh, &self.vis_camera, self.vis_size.0, self.vis_size.1)
    }

    /// Loss terms and, when asked, the gradient on every parameter, with
    /// the visibility split held fixed.
    pub fn evaluate(
        &self,
        params: &BodyParams,
        vis: &Visibility,
        want_grad: bool,
    ) -> Result<(LossTerms, Option<BodyParams>)> {
        if vis.visible.is_empty() {
            return Err(HapError::DegenerateVisibility);
        }
        let cfg = &self.cfg;
        let posed = self.model.forward(params)?;
        let mesh = &posed.mesh;
        let pts = &self.partial.positions;
        let n = pts.len() as f64;
        let mut dv = vec![Vec3::zeros(); mesh.vertices.len()];
        let mut terms = LossTerms::default();

        // squared distance to the visible surface
        // 1 = visible, 2 = invisible
        let mut side = vec![0u8; mesh.faces.len()];
        vis.visible.iter().for_each(|&f| side[f] = 1);
        vis.invisible.iter().for_each(|&f| side[f] = 2);
        let mut hints = self.hints.lock().unwrap_or_else(|e| e.into_inner());
        let (vis_hint, inv_hint) = &mut *hints;
        let bvh = TriangleBvh::over_faces(mesh, vis.visible.clone());
        let hits: Vec<_> = pts
            .par_iter()
            .zip(vis_hint.par_iter())
            .map(|(p, &h)| match side.get(h) {
                Some(1) => bvh.closest_hinted(p, f64::INFINITY, h),
                _ => bvh.closest(p),
            }
            .expect("non-empty"))
            .collect();
        for (h, (f, _)) in vis_hint.iter_mut().zip(&hits) {
            *h = *f;
        }
        terms.p2f_visible = hits.iter().map(|(_, s)| s.d2).sum::<f64>() / n;
        if want_grad && cfg.lambda1 != 0.0 {
            let s = -2.0 * cfg.lambda1 / n;
            for (p, (f, sp)) in pts.iter().zip(&hits) {
                let r = (p - sp.point) * s;
                for k in 0..3 {
                    dv[mesh.faces[*f][k]] += r * sp.bary[k];
                }
            }
        }

        // Chamfer between visible vertices and the partial cloud
        let vv = mesh.vertices_of(&vis.visible);
        let vpos: Vec<Vec3> = vv.iter().map(|&i| mesh.vertices[i]).collect();
        let to_partial: Vec<(usize, f64)> = vpos.par_iter().map(|v| self.partial_index.nearest(v)).collect();
        let vindex = SpatialIndex::new(&vpos);
        let to_body: Vec<(usize, f64)> = pts.par_iter().map(|p| vindex.nearest(p)).collect();
        let nv = vpos.len() as f64;
        terms.chamfer = to_partial.iter().map(|x| x.1).sum::<f64>() / nv + to_body.iter().map(|x| x.1).sum::<f64>() / n;
        if want_grad && cfg.lambda2 != 0.0 {
            for (k, (j, _)) in to_partial.iter().enumerate() {
                dv[vv[k]] += (vpos[k] - pts[*j]) * (2.0 * cfg.lambda2 / nv);
            }
            for (p, (k, _)) in pts.iter().zip(&to_body) {
                dv[vv[*k]] += (vpos[*k] - p) * (2.0 * cfg.lambda2 / n);
            }
        }

        // clamped repulsion from the invisible surface
        let cap2 = cfg.repulsion_cap * cfg.repulsion_cap;
        if !vis.invisible.is_empty() {
            let bvh = TriangleBvh::over_faces(mesh, vis.invisible.clone());
            // beyond the cap the term is constant, so far faces never matter
            let hits: Vec<_> = pts
                .par_iter()
                .zip(inv_hint.par_iter())
                .map(|(p, &h)| match side.get(h) {
                    Some(2) => bvh.closest_hinted(p, cap2, h),
                    _ => bvh.closest_within(p, cap2),
                })
                .collect();
            for (h, hit) in inv_hint.iter_mut().zip(&hits) {
                *h = hit.map_or(NO_HINT, |(f, _)| f);
            }
            terms.p2f_invisible = hits.iter().map(|h| h.map_or(cap2, |(_, s)| s.d2.min(cap2))).sum::<f64>() / n;
            if want_grad && cfg.lambda3 != 0.0 {
                let s = 2.0 * cfg.lambda3 / n;
                for (p, hit) in pts.iter().zip(&hits) {
                    let Some((f, sp)) = hit else { continue };
                    if sp.d2 >= cap2 {
                        continue;
                    }
                    let r = (p - sp.point) * s;
                    for k in 0..3 {
                        dv[mesh.faces[*f][k]] += r * sp.bary[k];
                    }
                }
            }
        } else {
            terms.p2f_invisible = cap2;
        }

        terms.beta_sq = params.beta.iter().map(|b| b * b).sum();

        // keypoints
        let nj = posed.joints.len() as f64;
        let mut dj = vec![Vec3::zeros(); posed.joints.len()];
        let mut kp = 0.0;
        for (j, (x, k0)) in posed.joints.iter().zip(&self.k0).enumerate() {
            let (u, v, _) = self.camera.project(x)?;
            let r = nalgebra::Vector2::new(u - k0[0], v - k0[1]);
            kp += r.norm_squared();
            if want_grad && cfg.mu_kp != 0.0 {
                let jac = self.camera.projection_jacobian(x)?;
                dj[j] = jac.transpose() * r * (2.0 * cfg.mu_kp / nj);
            }
        }
        terms.keypoint = kp / nj;

        if cfg.mu_sil != 0.0 {
            let (l, g) = silhouette_loss_and_grad(
                mesh,
                self.camera,
                &self.mask.data,
                self.mask.width,
                self.mask.height,
                cfg.sil_temperature,
                cfg.sil_cutoff,
            )?;
            terms.silhouette = l;
            if want_grad {
                for (d, g) in dv.iter_mut().zip(&g) {
                    *d += g * cfg.mu_sil;
                }
            }
            terms.hard_iou = Some(hard_iou(
                &silhouette(mesh, self.camera, self.mask.width, self.mask.height),
                &self.mask.data,
            ));
        }

        terms.total = cfg.lambda1 * terms.p2f_visible + cfg.lambda2 * terms.chamfer - cfg.lambda3 * terms.p2f_invisible
            + cfg.lambda4 * terms.beta_sq
            + cfg.mu_kp * terms.keypoint
            + cfg.mu_sil * terms.silhouette;

        let grad = want_grad.then(|| {
            let mut g = self.model.backward(params, &posed, &dv, &dj);
            for (gb, b) in g.beta.iter_mut().zip(&params.beta) {
                *gb += 2.0 * cfg.lambda4 * b;
            }
            g
        });
        Ok((terms, grad))
    }

    /// Unsquared mean distance from the partial cloud to the faces visible
    /// under `params` — the registration quality measure.
    pub fn visible_p2f(&self, params: &BodyParams) -> Result<f64> {
        let posed = self.model.forward(params)?;
        let vis = self.visibility_of(&posed);
        if vis.visible.is_empty() {
            return Err(HapError::DegenerateVisibility);
        }
        Ok(point_to_mesh(self.partial, &posed.mesh.with_faces(&vis.visible))?.mean)
    }

    /// Momentum gradient descent; returns the lowest-loss iterate seen.
    /// `observer` receives the terms at every iteration.
    pub fn solve(
        &self,
        params0: &BodyParams,
        mut observer: Option<&mut dyn FnMut(usize, &LossTerms)>,
    ) -> Result<RectifyOutcome> {
        let cfg = &self.cfg;
        let mut params = params0.clone();
        let mut velocity = vec![0.0; params.to_flat().len()];
        let mut best: Option<(f64, BodyParams)> = None;
        let mut vis = None;
        let mut last = LossTerms::default();
        for it in 0..=cfg.iters {
            if it % cfg.visibility_refresh == 0 || vis.is_none() {
                vis = Some(self.visibility(&params)?);
            }
            let final_eval = it == cfg.iters;
            let (terms, grad) = match self.evaluate(&params, vis.as_ref().unwrap(), !final_eval) {
                // a body thrown behind the camera is a diverged iterate
                Err(HapError::BehindCamera { .. }) if it > 0 => {
                    return Err(HapError::Divergence {
                        iteration: it,
                        loss: f64::NAN,
                    })
                }
                r => r?,
            };
            if !terms.total.is_finite() {
                return Err(HapError::Divergence {
                    iteration: it,
                    loss: terms.total,
                });
            }
            if let Some(obs) = observer.as_mut() {
                obs(it, &terms);
            }
            if best.as_ref().map_or(true, |(b, _)| terms.total < *b) {
                best = Some((terms.total, params.clone()));
            }
            last = terms;
            let Some(grad) = grad else { break };
            let g = grad.to_flat();
            if g.iter().any(|x| !x.is_finite()) {
                return Err(HapError::Divergence {
                    iteration: it,
                    loss: f64::NAN,
                });
            }
            let mut flat = params.to_flat();
            for ((p, v), g) in flat.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.lr * *v;
            }
            params = BodyParams::from_flat(&flat, params.beta.len(), params.theta.len());
            params.wrap();
        }
        let (best_loss, best_params) = best.expect("at least one evaluation");
        Ok(RectifyOutcome {
            params: best_params,
            best_loss,
            last_terms: last,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RectifyOutcome {
    pub params: BodyParams,
    pub best_loss: f64,
    pub last_terms: LossTerms,
}

pub fn hard_iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut i, mut u) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        i += (x && y) as usize;
        u += (x || y) as usize;
    }
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

/// Loss for `params` with `k0` keypoints and visibility computed at `params`.
pub fn rectify_loss(
    model: &LBSBodyModel,
    params: &BodyParams,
    partial: &PointCloud,
    camera: &Camera,
    k0: &[[f64; 2]],
    mask: &Mask,
    cfg: &RectifyConfig,
) -> Result<LossTerms> {
    let problem = RectifyProblem::with_keypoints(model, k0.to_vec(), partial, camera, mask, cfg.clone())?;
    let vis = problem.visibility(params)?;
    Ok(problem.evaluate(params, &vis, false)?.0)
}

/// Register `model` to `partial` starting from `params0`.
pub fn rectify(
    model: &LBSBodyModel,
    params0: &BodyParams,
    partial: &PointCloud,
    camera: &Camera,
    mask: &Mask,
    cfg: &RectifyConfig,
) -> Result<BodyParams> {
    let problem = RectifyProblem::new(model, params0, partial, camera, mask, cfg.clone())?;
    Ok(problem.solve(params0, None)?.params)
}

/// Like [`rectify`], streaming the per-iteration breakdown as CSV.
pub fn rectify_logged(
    model: &LBSBodyModel,
    params0: &BodyParams,
    partial: &PointCloud,
    camera: &Camera,
    mask: &Mask,
    cfg: &RectifyConfig,
    log: &mut dyn Write,
) -> Result<BodyParams> {
    let problem = RectifyProblem::new(model, params0, partial, camera, mask, cfg.clone())?;
    writeln!(log, "{}", LossTerms::CSV_HEADER)?;
    let mut io_err = None;
    let mut obs = |it: usize, t: &LossTerms| {
        if io_err.is_none() {
            if let Err(e) = writeln!(log, "{}", t.csv_row(it)) {
                io_err = Some(e);
            }
        }
    };
    let out = problem.solve(params0, Some(&mut obs))?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    Ok(out.params)
}
