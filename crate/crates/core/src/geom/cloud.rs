use nalgebra::{Isometry3, Point3};

use super::{Aabb, Vec3};
use crate::error::{HapError, Result};

/// Points in meters with optional per-point color (in `[0, 1]`) and unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Option<Vec<Vec3>>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<Vec3>,
        colors: Option<Vec<Vec3>>,
        normals: Option<Vec<Vec3>>,
    ) -> Result<Self> {
        let pc = PointCloud {
            positions,
            colors,
            normals,
        };
        pc.validate()?;
        Ok(pc)
    }

    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        PointCloud {
            positions,
            colors: None,
            normals: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if let Some(i) = self.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(HapError::invalid(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(colors) = &self.colors {
            if colors.len() != n {
                return Err(HapError::invalid(format!(
                    "{} colors for {n} points",
                    colors.len()
                )));
            }
            if let Some(i) = colors
                .iter()
                .position(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
            {
                return Err(HapError::invalid(format!("color {i} outside [0, 1]")));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(HapError::invalid(format!(
                    "{} normals for {n} points",
                    normals.len()
                )));
            }
            if let Some(i) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(HapError::invalid(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Rows at `indices`, in that order, carrying every attribute along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let pick = |v: &Vec<Vec3>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        PointCloud {
            positions: pick(&self.positions),
            colors: self.colors.as_ref().map(pick),
            normals: self.normals.as_ref().map(pick),
        }
    }

    /// Concatenate two clouds. An attribute survives only if both sides have it,
    /// except colors, where a missing side is filled with black.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let colors = match (&self.colors, &other.colors) {
            (None, None) => None,
            (a, b) => {
                let fill = |c: &Option<Vec<Vec3>>, n: usize| {
                    c.clone().unwrap_or_else(|| vec![Vec3::zeros(); n])
                };
                let mut out = fill(a, self.len());
                out.extend(fill(b, other.len()));
                Some(out)
            }
        };
        let normals = match (&self.normals, &other.normals) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        PointCloud {
            positions,
            colors,
            normals,
        }
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> PointCloud {
        PointCloud {
            positions: self
                .positions
                .iter()
                .map(|p| iso.transform_point(&Point3::from(*p)).coords)
                .collect(),
            colors: self.colors.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| iso.transform_vector(n)).collect()),
        }
    }

    pub fn translated(&self, t: &Vec3) -> PointCloud {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p += t;
        }
        out
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.positions)
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.is_empty() {
            return None;
        }
        let sum: Vec3 = self.positions.iter().sum();
        Some(sum / self.len() as f64)
    }
}

/// Similarity transform taking a cloud to zero mean and unit max radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub center: Vec3,
    pub scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            center: Vec3::zeros(),
            scale: 1.0,
        }
    }

    /// Zero mean, max distance from the mean equal to one.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(HapError::invalid("cannot normalize an empty cloud"));
        }
        let center = points.iter().sum::<Vec3>() / points.len() as f64;
        let radius = points
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0_f64, f64::max);
        let scale = if radius > 0.0 { radius } else { 1.0 };
        Ok(Normalization { center, scale })
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.center) / self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.center
    }
}
