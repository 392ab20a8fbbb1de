//! Axis-angle rotations and their derivatives.

use nalgebra::Matrix3;

use crate::geom::Vec3;

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of an axis-angle vector (Rodrigues).
pub fn rodrigues(v: &Vec3) -> Matrix3<f64> {
    let th2 = v.norm_squared();
    let k = skew(v);
    if th2 < 1e-16 {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let th = th2.sqrt();
    Matrix3::identity() + (th.sin() / th) * k + ((1.0 - th.cos()) / th2) * k * k
}

/// `∂R/∂v_i` for i = 0, 1, 2.
///
/// Uses `∂R/∂v_i = (v_i [v]× + [v × (I − R) e_i]×) R / |v|²` away from
/// zero and the second-order expansion near it.
pub fn rodrigues_derivatives(v: &Vec3) -> [Matrix3<f64>; 3] {
    let th2 = v.norm_squared();
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];
    if th2 < 1e-12 {
        let kv = skew(v);
        return e.map(|ei| {
            let ke = skew(&ei);
            ke + 0.5 * (ke * kv + kv * ke)
        });
    }
    let r = rodrigues(v);
    let kv = skew(v);
    let i_minus_r = Matrix3::identity() - r;
    e.map(|ei| {
        let w = v.cross(&(i_minus_r * ei));
        (v.dot(&ei) * kv + skew(&w)) * r / th2
    })
}

/// Wrap an axis-angle vector so its norm is below 2π (same rotation).
pub fn wrap_axis_angle(v: &Vec3) -> Vec3 {
    let tau = std::f64::consts::TAU;
    let th = v.norm();
    if th < tau {
        return *v;
    }
    v * ((th % tau) / th)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        assert!((r * Vec3::x() - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn derivatives_match_differences() {
        for v in [Vec3::new(0.3, -0.2, 0.5), Vec3::new(1e-7, 2e-7, 0.0), Vec3::zeros(), Vec3::new(2.0, 1.0, -2.5)] {
            let d = rodrigues_derivatives(&v);
            for i in 0..3 {
                let mut h = Vec3::zeros();
                h[i] = 1e-6;
                let fd = (rodrigues(&(v + h)) - rodrigues(&(v - h))) / 2e-6;
                assert!((fd - d[i]).abs().max() < 1e-8, "v = {v:?}, i = {i}");
            }
        }
    }

    #[test]
    fn wrapping_preserves_rotation() {
        let v = Vec3::new(5.0, 4.0, -3.0);
        let w = wrap_axis_angle(&v);
        assert!(w.norm() < std::f64::consts::TAU);
        assert!((rodrigues(&v) - rodrigues(&w)).abs().max() < 1e-12);
    }
}
