//! Depth replacement.
//!
//! s₁: generated points within a ball around any observed point.
//! s₂: for every remaining generated point, its nearest observed point.
//! s₃: observed points within a ball around any point of s₂ (s₂ included).
//! Result: (ℋ ∖ s₁) ∪ s₃.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::RefineConfig;
use crate::error::{HapError, Result};
use crate::geom::{PointCloud, SpatialIndex, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct Replacement {
    pub cloud: PointCloud,
    /// Indices into ℋ, ascending.
    pub s1: Vec<usize>,
    /// Indices into 𝒫, ascending.
    pub s2: Vec<usize>,
    /// Indices into 𝒫, ascending.
    pub s3: Vec<usize>,
    pub radius: f64,
    /// True when the result is empty.
    pub degenerate: bool,
}

/// Median nearest-neighbor distance within `points` (0 for fewer than two).
pub fn median_spacing(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let index = SpatialIndex::new(points);
    let mut d: Vec<f64> = points
        .par_iter()
        .map(|p| index.knn_with_dist2(p, 2).map(|nn| nn[1].1.sqrt()).unwrap_or(0.0))
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

fn union_of<F>(queries: &[usize], f: F) -> Vec<usize>
where
    F: Fn(usize) -> Vec<usize> + Sync,
{
    let sets: Vec<Vec<usize>> = queries.par_iter().map(|&q| f(q)).collect();
    sets.into_iter().flatten().collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn depth_replace(h: &PointCloud, partial: &PointCloud, cfg: &RefineConfig) -> Result<Replacement> {
    if h.is_empty() || partial.is_empty() {
        return Err(HapError::invalid("depth replacement needs two non-empty clouds"));
    }
    if cfg.k_replace == 0 {
        return Err(HapError::invalid("k_replace must be at least 1"));
    }
    let r = match cfg.r_replace {
        Some(r) => r,
        None => 4.0 * median_spacing(&h.positions),
    };
    let k = cfg.k_replace;
    let h_index = SpatialIndex::new(&h.positions);
    let p_index = SpatialIndex::new(&partial.positions);

    let all_p: Vec<usize> = (0..partial.len()).collect();
    let s1 = union_of(&all_p, |i| h_index.ball_query(&partial.positions[i], r, k));
    let in_s1: BTreeSet<usize> = s1.iter().copied().collect();
    let rest: Vec<usize> = (0..h.len()).filter(|i| !in_s1.contains(i)).collect();
    let s2 = union_of(&rest, |i| vec![p_index.nearest(&h.positions[i]).0]);
    let mut s3 = union_of(&s2, |i| p_index.ball_query(&partial.positions[i], r, k));
    s3 = s3.into_iter().chain(s2.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();

    let kept = h.select(&rest);
    let added = partial.select(&s3);
    let colors = partial.colors.as_ref().map(|pc| {
        std::iter::repeat_n(Vec3::zeros(), rest.len())
            .chain(s3.iter().map(|&i| pc[i]))
            .collect::<Vec<_>>()
    });
    let cloud = PointCloud {
        positions: kept.positions.into_iter().chain(added.positions).collect(),
        colors,
        normals: None,
    };
    let degenerate = cloud.is_empty();
    if degenerate {
        log::warn!("depth replacement removed every point (s₁ covers the whole cloud and s₂ is empty)");
    }
    Ok(Replacement {
        cloud,
        s1,
        s2,
        s3,
        radius: r,
        degenerate,
    })
}
