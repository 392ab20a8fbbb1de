use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::rotation::{rodrigues, rodrigues_derivatives, wrap_axis_angle};
use crate::error::{HapError, Result};
use crate::geom::{TriMesh, Vec3};

/// Linear-blend-skinning body model with linear shape blend shapes.
#[derive(Clone, Debug)]
pub struct LBSBodyModel {
    pub template: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// `V × 3 × B`, flattened as `(v * 3 + c) * B + b`.
    pub shape_dirs: Vec<f64>,
    pub num_betas: usize,
    /// `J × V`, row-major.
    pub joint_regressor: Vec<f64>,
    /// `V × J`, row-major.
    pub skin_weights: Vec<f64>,
    pub parents: Vec<Option<usize>>,
    skin_sparse: Vec<Vec<(usize, f64)>>,
    regressor_sparse: Vec<Vec<(usize, f64)>>,
    /// Joints ordered so every parent precedes its children.
    order: Vec<usize>,
}

impl LBSBodyModel {
    pub fn new(
        template: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        shape_dirs: Vec<f64>,
        num_betas: usize,
        joint_regressor: Vec<f64>,
        skin_weights: Vec<f64>,
        parents: Vec<Option<usize>>,
    ) -> Result<Self> {
        let v = template.len();
        let j = parents.len();
        if j == 0 || v == 0 {
            return Err(HapError::invalid("body model needs at least one vertex and one joint"));
        }
        if shape_dirs.len() != v * 3 * num_betas {
            return Err(HapError::invalid(format!(
                "shape_dirs has {} entries, expected {v}x3x{num_betas}",
                shape_dirs.len()
            )));
        }
        if joint_regressor.len() != j * v {
            return Err(HapError::invalid(format!("joint_regressor must be {j}x{v}")));
        }
        if skin_weights.len() != v * j {
            return Err(HapError::invalid(format!("skin_weights must be {v}x{j}")));
        }
        TriMesh::new(template.clone(), faces.clone())?;
        for r in 0..j {
            let s: f64 = joint_regressor[r * v..(r + 1) * v].iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(HapError::invalid(format!("joint_regressor row {r} sums to {s}")));
            }
        }
        for i in 0..v {
            let row = &skin_weights[i * j..(i + 1) * j];
            if row.iter().any(|&w| w < 0.0) {
                return Err(HapError::invalid(format!("skin_weights row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(HapError::invalid(format!("skin_weights row {i} sums to {s}")));
            }
        }
        let order = topological_order(&parents)?;
        let skin_sparse = (0..v)
            .map(|i| {
                (0..j)
                    .filter_map(|k| {
                        let w = skin_weights[i * j + k];
                        (w != 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        let regressor_sparse = (0..j)
            .map(|r| {
                (0..v)
                    .filter_map(|i| {
                        let w = joint_regressor[r * v + i];
                        (w != 0.0).then_some((i, w))
                    })
                    .collect()
            })
            .collect();
        Ok(LBSBodyModel {
            template,
            faces,
            shape_dirs,
            num_betas,
            joint_regressor,
            skin_weights,
            parents,
            skin_sparse,
            regressor_sparse,
            order,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.template.len()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn rest_params(&self) -> BodyParams {
        BodyParams::zeros(self.num_betas, self.num_joints())
    }

    fn check(&self, params: &BodyParams) -> Result<()> {
        if params.beta.len() != self.num_betas {
            return Err(HapError::invalid(format!(
                "{} betas given, model has {}",
                params.beta.len(),
                self.num_betas
            )));
        }
        if params.theta.len() != self.num_joints() {
            return Err(HapError::invalid(format!(
                "{} joint rotations given, model has {} joints",
                params.theta.len(),
                self.num_joints()
            )));
        }
        if !params.is_finite() {
            return Err(HapError::invalid("body parameters must be finite"));
        }
        Ok(())
    }

    /// Shaped rest vertices: template plus shape blend shapes.
    pub fn shaped(&self, beta: &[f64]) -> Vec<Vec3> {
        let b = self.num_betas;
        self.template
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut v = *t;
                for c in 0..3 {
                    let dirs = &self.shape_dirs[(i * 3 + c) * b..(i * 3 + c + 1) * b];
                    v[c] += dirs.iter().zip(beta).map(|(d, x)| d * x).sum::<f64>();
                }
                v
            })
            .collect()
    }

    pub fn regress_joints(&self, verts: &[Vec3]) -> Vec<Vec3> {
        self.regressor_sparse
            .iter()
            .map(|row| row.iter().map(|&(i, w)| verts[i] * w).sum())
            .collect()
    }

    /// Pose the model: shape, regress joints, compose the kinematic chain,
    /// skin, translate.
    pub fn forward(&self, params: &BodyParams) -> Result<PosedBody> {
        self.check(params)?;
        let v_shaped = self.shaped(&params.beta);
        let rest_joints = self.regress_joints(&v_shaped);
        let nj = self.num_joints();
        let local_rot: Vec<Matrix3<f64>> = params.theta.iter().map(rodrigues).collect();
        // Work in displacements from the rest pose so that a zero pose is
        // reproduced bit for bit: joint j moves by s_j and a vertex skinned
        // to j moves by (R_j − I)(v − J_j) + s_j.
        let mut global_rot = vec![Matrix3::identity(); nj];
        let mut shift = vec![Vec3::zeros(); nj];
        for &j in &self.order {
            match self.parents[j] {
                None => global_rot[j] = local_rot[j],
                Some(p) => {
                    global_rot[j] = global_rot[p] * local_rot[j];
                    shift[j] = shift[p] + (global_rot[p] - Matrix3::identity()) * (rest_joints[j] - rest_joints[p]);
                }
            }
        }
        let bend: Vec<Matrix3<f64>> = global_rot.iter().map(|r| r - Matrix3::identity()).collect();
        let vertices = v_shaped
            .iter()
            .zip(&self.skin_sparse)
            .map(|(vs, ws)| {
                let mut d = Vec3::zeros();
                for &(j, w) in ws {
                    d += w * (bend[j] * (vs - rest_joints[j]) + shift[j]);
                }
                (vs + d) + params.translation
            })
            .collect();
        let joints = rest_joints
            .iter()
            .zip(&shift)
            .map(|(j, s)| (j + s) + params.translation)
            .collect();
        Ok(PosedBody {
            mesh: TriMesh {
                vertices,
                faces: self.faces.clone(),
            },
            joints,
            v_shaped,
            rest_joints,
            local_rot,
            global_rot,
        })
    }

    /// Reverse-mode pass through [`forward`](Self::forward): given loss
    /// gradients on posed vertices and posed joints, return the gradient on
    /// every parameter.
    pub fn backward(
        &self,
        params: &BodyParams,
        posed: &PosedBody,
        d_vertices: &[Vec3],
        d_joints: &[Vec3],
    ) -> BodyParams {
        let nj = self.num_joints();
        let nv = self.num_vertices();
        let mut d_translation = Vec3::zeros();
        let mut d_grot = vec![Matrix3::zeros(); nj];
        let mut d_shift = vec![Vec3::zeros(); nj];
        let mut d_vs = vec![Vec3::zeros(); nv];
        let mut d_rest = vec![Vec3::zeros(); nj];

        for (i, dv) in d_vertices.iter().enumerate() {
            if *dv == Vec3::zeros() {
                continue;
            }
            d_translation += dv;
            d_vs[i] += dv;
            let vs = posed.v_shaped[i];
            for &(j, w) in &self.skin_sparse[i] {
                let rel = vs - posed.rest_joints[j];
                d_grot[j] += w * dv * rel.transpose();
                let back = w * (posed.global_rot[j].transpose() * dv - dv);
                d_vs[i] += back;
                d_rest[j] -= back;
                d_shift[j] += w * dv;
            }
        }
        for (j, dj) in d_joints.iter().enumerate().take(nj) {
            d_rest[j] += dj;
            d_shift[j] += dj;
            d_translation += dj;
        }
        let mut d_local = vec![Matrix3::zeros(); nj];
        for &j in self.order.iter().rev() {
            match self.parents[j] {
                None => d_local[j] = d_grot[j],
                Some(p) => {
                    let rp = posed.global_rot[p];
                    let bone = posed.rest_joints[j] - posed.rest_joints[p];
                    let ds = d_shift[j];
                    d_shift[p] += ds;
                    let dgr = d_grot[j];
                    d_grot[p] += ds * bone.transpose() + dgr * posed.local_rot[j].transpose();
                    let back = rp.transpose() * ds - ds;
                    d_rest[j] += back;
                    d_rest[p] -= back;
                    d_local[j] = rp.transpose() * d_grot[j];
                }
            }
        }
        let theta = (0..nj)
            .map(|j| {
                let dr = rodrigues_derivatives(&params.theta[j]);
                Vec3::new(
                    d_local[j].component_mul(&dr[0]).sum(),
                    d_local[j].component_mul(&dr[1]).sum(),
                    d_local[j].component_mul(&dr[2]).sum(),
                )
            })
            .collect();
        for (row, dj) in self.regressor_sparse.iter().zip(&d_rest) {
            for &(i, w) in row {
                d_vs[i] += w * dj;
            }
        }
        let b = self.num_betas;
        let mut beta = vec![0.0; b];
        for (i, dv) in d_vs.iter().enumerate() {
            for c in 0..3 {
                let dirs = &self.shape_dirs[(i * 3 + c) * b..(i * 3 + c + 1) * b];
                for (acc, d) in beta.iter_mut().zip(dirs) {
                    *acc += d * dv[c];
                }
            }
        }
        BodyParams {
            beta,
            theta,
            translation: d_translation,
        }
    }
}

fn topological_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let n = parents.len();
    if parents[0].is_some() {
        return Err(HapError::invalid("joint 0 must be the root"));
    }
    let mut children = vec![Vec::new(); n];
    for (j, p) in parents.iter().enumerate().skip(1) {
        match p {
            Some(p) if *p < n && *p != j => children[*p].push(j),
            _ => return Err(HapError::invalid(format!("joint {j} has an invalid parent {p:?}"))),
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev());
    }
    if order.len() != n {
        return Err(HapError::invalid("parent graph is not a tree rooted at joint 0"));
    }
    Ok(order)
}

/// Output of [`LBSBodyModel::forward`], with the intermediates needed by
/// the backward pass.
#[derive(Clone, Debug)]
pub struct PosedBody {
    pub mesh: TriMesh,
    /// Posed joint positions (translation included).
    pub joints: Vec<Vec3>,
    pub v_shaped: Vec<Vec3>,
    pub rest_joints: Vec<Vec3>,
    local_rot: Vec<Matrix3<f64>>,
    global_rot: Vec<Matrix3<f64>>,
}

/// Shape coefficients, per-joint axis-angle rotations, and a root translation.
/// Also used to carry gradients with the same layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    #[serde(with = "vec3_list")]
    pub theta: Vec<Vec3>,
    #[serde(with = "vec3_one")]
    pub translation: Vec3,
}

impl BodyParams {
    pub fn zeros(num_betas: usize, num_joints: usize) -> Self {
        BodyParams {
            beta: vec![0.0; num_betas],
            theta: vec![Vec3::zeros(); num_joints],
            translation: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().all(|b| b.is_finite())
            && self.theta.iter().all(|t| t.iter().all(|c| c.is_finite()))
            && self.translation.iter().all(|c| c.is_finite())
    }

    /// Bring every axis-angle below 2π.
    pub fn wrap(&mut self) {
        for t in &mut self.theta {
            *t = wrap_axis_angle(t);
        }
    }

    /// Flat view: beta, then theta row by row, then translation.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        for t in &self.theta {
            v.extend(t.iter());
        }
        v.extend(self.translation.iter());
        v
    }

    pub fn from_flat(flat: &[f64], num_betas: usize, num_joints: usize) -> Self {
        assert_eq!(flat.len(), num_betas + 3 * num_joints + 3);
        let beta = flat[..num_betas].to_vec();
        let theta = (0..num_joints)
            .map(|j| Vec3::from_column_slice(&flat[num_betas + 3 * j..num_betas + 3 * j + 3]))
            .collect();
        let t = num_betas + 3 * num_joints;
        BodyParams {
            beta,
            theta,
            translation: Vec3::from_column_slice(&flat[t..t + 3]),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| crate::io::open_err(path, e))?;
        serde_json::from_str(&s).map_err(|e| HapError::parse(format!("body params {}", path.display()), e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

mod vec3_list {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::geom::Vec3;

    pub fn serialize<S: Serializer>(v: &[Vec3], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| [p.x, p.y, p.z]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec3>, D::Error> {
        let raw: Vec<[f64; 3]> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect())
    }
}

mod vec3_one {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geom::Vec3;

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a: [f64; 3] = Deserialize::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}
