use rand::Rng;

use super::Vec3;
use crate::error::{HapError, Result};
use crate::rng::rng_from_seed;

/// Farthest point sampling: `m` indices, the first drawn from `seed`.
pub fn fps(points: &[Vec3], m: usize, seed: u64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(HapError::invalid("fps on an empty cloud"));
    }
    let start = rng_from_seed(seed).random_range(0..points.len());
    fps_from(points, m, start)
}

/// Farthest point sampling from a fixed starting index. Each step picks the
/// point with the largest distance to the selected set, lowest index on ties.
pub fn fps_from(points: &[Vec3], m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(HapError::invalid(format!("fps needs 1 <= m <= N, got m = {m}, N = {n}")));
    }
    if start >= n {
        return Err(HapError::invalid(format!("fps start {start} out of range")));
    }
    let mut selected = Vec::with_capacity(m);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = start;
    for _ in 0..m {
        selected.push(current);
        min_d2[current] = f64::NEG_INFINITY;
        let c = points[current];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, (p, d)) in points.iter().zip(min_d2.iter_mut()).enumerate() {
            if *d == f64::NEG_INFINITY {
                continue;
            }
            let d2 = (p - c).norm_squared();
            if d2 < *d {
                *d = d2;
            }
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
    }
    Ok(selected)
}
