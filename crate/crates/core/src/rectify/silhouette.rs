//! Soft silhouette coverage and a differentiable IoU against a binary mask.
//!
//! Each face contributes `σ(sd / τ)` at a pixel, where `sd` is the signed 2D
//! distance from the pixel center to the projected triangle (positive
//! inside). Coverage is `1 − Π (1 − σ)`, evaluated in log space.

use nalgebra::Vector2;

use crate::camera::Camera;
use crate::error::Result;
use crate::geom::{TriMesh, Vec3};

type V2 = Vector2<f64>;

#[derive(Clone, Debug)]
pub struct SoftSilhouette {
    pub width: usize,
    pub height: usize,
    /// Per-pixel coverage in [0, 1].
    pub coverage: Vec<f64>,
    accum: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Distance from `p` to segment `ab` with the gradient on `a` and `b`
/// (closest-point parameter held fixed).
fn segment_distance(p: V2, a: V2, b: V2) -> (f64, V2, V2) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = a + ab * t;
    let d = (p - q).norm();
    if d < 1e-12 {
        return (d, V2::zeros(), V2::zeros());
    }
    let g = (q - p) / d;
    (d, g * (1.0 - t), g * t)
}

/// Signed distance to a 2D triangle (positive inside) and its gradient on
/// the three corners.
fn signed_distance(p: V2, tri: &[V2; 3]) -> (f64, [V2; 3]) {
    let mut best = (f64::INFINITY, 0usize, V2::zeros(), V2::zeros());
    for e in 0..3 {
        let (d, ga, gb) = segment_distance(p, tri[e], tri[(e + 1) % 3]);
        if d < best.0 {
            best = (d, e, ga, gb);
        }
    }
    let cross = |a: V2, b: V2, c: V2| (b - a).perp(&(c - a));
    let area = cross(tri[0], tri[1], tri[2]);
    let inside = (0..3).all(|e| cross(tri[e], tri[(e + 1) % 3], p) * area >= 0.0);
    let s = if inside { 1.0 } else { -1.0 };
    let mut g = [V2::zeros(); 3];
    g[best.1] = best.2 * s;
    g[(best.1 + 1) % 3] = best.3 * s;
    (s * best.0, g)
}

fn project_all(mesh: &TriMesh, camera: &Camera) -> Result<Vec<V2>> {
    mesh.vertices
        .iter()
        .map(|v| camera.project(v).map(|(u, w, _)| V2::new(u, w)))
        .collect()
}

fn pixel_range(tri: &[V2; 3], margin: f64, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
    let umin = (tri.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - margin).ceil().max(0.0);
    let umax = (tri.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + margin).floor().min(width as f64 - 1.0);
    let vmin = (tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - margin).ceil().max(0.0);
    let vmax = (tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + margin).floor().min(height as f64 - 1.0);
    (umin <= umax && vmin <= vmax).then_some((umin as usize, umax as usize, vmin as usize, vmax as usize))
}

/// Soft coverage of `mesh` at `width × height`. Pixels farther than
/// `cutoff · temperature` outside a face ignore that face.
pub fn soft_silhouette(
    mesh: &TriMesh,
    camera: &Camera,
    width: usize,
    height: usize,
    temperature: f64,
    cutoff: f64,
) -> Result<SoftSilhouette> {
    let uv = project_all(mesh, camera)?;
    let mut accum = vec![0.0; width * height];
    let margin = cutoff * temperature;
    for f in &mesh.faces {
        let tri = [uv[f[0]], uv[f[1]], uv[f[2]]];
        let Some((u0, u1, v0, v1)) = pixel_range(&tri, margin, width, height) else {
            continue;
        };
        for v in v0..=v1 {
            for u in u0..=u1 {
                let (sd, _) = signed_distance(V2::new(u as f64, v as f64), &tri);
                let x = sd / temperature;
                if x > -cutoff {
                    accum[v * width + u] += softplus(x);
                }
            }
        }
    }
    let coverage = accum.iter().map(|a| -(-a).exp_m1()).collect();
    Ok(SoftSilhouette {
        width,
        height,
        coverage,
        accum,
    })
}

/// Soft IoU between coverage and `mask`.
pub fn soft_iou(sil: &SoftSilhouette, mask: &[bool]) -> f64 {
    let (i, u) = intersection_union(&sil.coverage, mask);
    if u > 0.0 {
        i / u
    } else {
        1.0
    }
}

fn intersection_union(c: &[f64], mask: &[bool]) -> (f64, f64) {
    let mut i = 0.0;
    let mut u = 0.0;
    for (&c, &m) in c.iter().zip(mask) {
        let m = if m { 1.0 } else { 0.0 };
        i += c * m;
        u += c + m - c * m;
    }
    (i, u)
}

/// `1 − softIoU` and its gradient on every mesh vertex.
pub fn silhouette_loss_and_grad(
    mesh: &TriMesh,
    camera: &Camera,
    mask: &[bool],
    width: usize,
    height: usize,
    temperature: f64,
    cutoff: f64,
) -> Result<(f64, Vec<Vec3>)> {
    let sil = soft_silhouette(mesh, camera, width, height, temperature, cutoff)?;
    let (i, u) = intersection_union(&sil.coverage, mask);
    if u <= 0.0 {
        return Ok((0.0, vec![Vec3::zeros(); mesh.vertices.len()]));
    }
    // d(1 - I/U)/dc per pixel, then through c = 1 - exp(-A)
    let d_accum: Vec<f64> = sil
        .coverage
        .iter()
        .zip(mask)
        .zip(&sil.accum)
        .map(|((_, &m), &a)| {
            let m = if m { 1.0 } else { 0.0 };
            let d_c = -(m * u - i * (1.0 - m)) / (u * u);
            d_c * (-a).exp()
        })
        .collect();
    let uv = project_all(mesh, camera)?;
    let mut d_uv = vec![V2::zeros(); uv.len()];
    let margin = cutoff * temperature;
    for f in &mesh.faces {
        let tri = [uv[f[0]], uv[f[1]], uv[f[2]]];
        let Some((u0, u1, v0, v1)) = pixel_range(&tri, margin, width, height) else {
            continue;
        };
        for v in v0..=v1 {
            for uu in u0..=u1 {
                let g_a = d_accum[v * width + uu];
                if g_a == 0.0 {
                    continue;
                }
                let (sd, g) = signed_distance(V2::new(uu as f64, v as f64), &tri);
                let x = sd / temperature;
                if x <= -cutoff {
                    continue;
                }
                let s = g_a * sigmoid(x) / temperature;
                for k in 0..3 {
                    d_uv[f[k]] += g[k] * s;
                }
            }
        }
    }
    let mut grad = vec![Vec3::zeros(); mesh.vertices.len()];
    for (k, (g, v)) in d_uv.iter().zip(&mesh.vertices).enumerate() {
        if *g == V2::zeros() {
            continue;
        }
        let j = camera.projection_jacobian(v)?;
        grad[k] = j.transpose() * g;
    }
    Ok((1.0 - i / u, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::quad;

    #[test]
    fn signed_distance_signs() {
        let tri = [V2::new(0.0, 0.0), V2::new(4.0, 0.0), V2::new(0.0, 4.0)];
        assert!((signed_distance(V2::new(1.0, 1.0), &tri).0 - 1.0).abs() < 1e-12);
        assert!((signed_distance(V2::new(-2.0, 1.0), &tri).0 + 2.0).abs() < 1e-12);
        // opposite winding gives the same answer
        let rev = [tri[0], tri[2], tri[1]];
        assert!((signed_distance(V2::new(1.0, 1.0), &rev).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_differences() {
        let mesh = quad(-0.3, 0.25, -0.2, 0.35, 0.0);
        let cam = Camera::pinhole(30.0, 30.0, 15.5, 15.5).looking_at(Vec3::new(0.05, 0.02, -2.0), Vec3::zeros(), Vec3::y());
        let mask: Vec<bool> = (0..32 * 32).map(|i| (i % 32) > 12 && (i / 32) < 20).collect();
        let (l0, g) = silhouette_loss_and_grad(&mesh, &cam, &mask, 32, 32, 1.0, 40.0).unwrap();
        assert!(l0 > 0.0 && l0 < 1.0);
        let h = 1e-6;
        for v in 0..4 {
            for k in 0..3 {
                let mut plus = mesh.clone();
                plus.vertices[v][k] += h;
                let mut minus = mesh.clone();
                minus.vertices[v][k] -= h;
                let lp = silhouette_loss_and_grad(&plus, &cam, &mask, 32, 32, 1.0, 40.0).unwrap().0;
                let lm = silhouette_loss_and_grad(&minus, &cam, &mask, 32, 32, 1.0, 40.0).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g[v][k]).abs() <= 1e-5 * fd.abs().max(1e-3), "v{v} k{k}: fd {fd} vs {}", g[v][k]);
            }
        }
    }
}
