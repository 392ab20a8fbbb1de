//! Synthetic articulated mannequin with the SMPL joint layout (24 joints,
//! 10 shape coefficients, ~2k vertices). Each joint owns one tube-shaped
//! segment running toward its child; the regressor places each joint at the
//! center of its segment's first ring.

use super::LBSBodyModel;
use crate::geom::Vec3;

pub const NUM_JOINTS: usize = 24;
pub const NUM_BETAS: usize = 10;
const RINGS: usize = 7;
const SIDES: usize = 12;

/// SMPL kinematic tree.
pub const PARENTS: [i32; NUM_JOINTS] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
];

/// Rest joint positions, y up, facing +z, pelvis at the origin.
const JOINTS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.07, -0.09, 0.0],
    [-0.07, -0.09, 0.0],
    [0.0, 0.11, -0.01],
    [0.10, -0.48, 0.0],
    [-0.10, -0.48, 0.0],
    [0.0, 0.25, -0.01],
    [0.09, -0.88, -0.02],
    [-0.09, -0.88, -0.02],
    [0.0, 0.32, 0.0],
    [0.11, -0.93, 0.08],
    [-0.11, -0.93, 0.08],
    [0.0, 0.54, -0.01],
    [0.08, 0.45, -0.01],
    [-0.08, 0.45, -0.01],
    [0.0, 0.62, 0.02],
    [0.19, 0.47, -0.01],
    [-0.19, 0.47, -0.01],
    [0.45, 0.46, -0.02],
    [-0.45, 0.46, -0.02],
    [0.70, 0.46, -0.01],
    [-0.70, 0.46, -0.01],
    [0.79, 0.46, -0.01],
    [-0.79, 0.46, -0.01],
];

/// Segment end for each joint: a child joint, or a fixed offset for leaves.
enum Target {
    Joint(usize),
    Offset([f64; 3]),
}

fn target(j: usize) -> Target {
    match j {
        0 => Target::Joint(3),
        1 => Target::Joint(4),
        2 => Target::Joint(5),
        3 => Target::Joint(6),
        4 => Target::Joint(7),
        5 => Target::Joint(8),
        6 => Target::Joint(9),
        7 => Target::Joint(10),
        8 => Target::Joint(11),
        9 => Target::Joint(12),
        10 | 11 => Target::Offset([0.0, -0.01, 0.10]),
        12 => Target::Joint(15),
        13 => Target::Joint(16),
        14 => Target::Joint(17),
        15 => Target::Offset([0.0, 0.20, 0.0]),
        16 => Target::Joint(18),
        17 => Target::Joint(19),
        18 => Target::Joint(20),
        19 => Target::Joint(21),
        20 => Target::Joint(22),
        21 => Target::Joint(23),
        22 => Target::Offset([0.08, 0.0, 0.0]),
        23 => Target::Offset([-0.08, 0.0, 0.0]),
        _ => unreachable!(),
    }
}

/// (lateral radius, depth radius) of each segment.
fn radii(j: usize) -> (f64, f64) {
    match j {
        0 => (0.15, 0.10),
        3 | 6 => (0.14, 0.10),
        9 => (0.16, 0.10),
        1 | 2 => (0.075, 0.075),
        4 | 5 => (0.055, 0.055),
        7 | 8 => (0.045, 0.045),
        10 | 11 => (0.04, 0.035),
        12 => (0.055, 0.055),
        13 | 14 => (0.05, 0.05),
        15 => (0.09, 0.10),
        16 | 17 => (0.05, 0.05),
        18 | 19 => (0.04, 0.04),
        20 | 21 => (0.035, 0.03),
        _ => (0.03, 0.02),
    }
}

fn is_leg(j: usize) -> bool {
    matches!(j, 1 | 2 | 4 | 5 | 7 | 8 | 10 | 11)
}

fn is_arm(j: usize) -> bool {
    matches!(j, 16..=23)
}

fn is_torso(j: usize) -> bool {
    matches!(j, 0 | 3 | 6 | 9)
}

/// Build the mannequin.
pub fn mannequin() -> LBSBodyModel {
    let parents: Vec<Option<usize>> = PARENTS.iter().map(|&p| (p >= 0).then_some(p as usize)).collect();
    let joints: Vec<Vec3> = JOINTS.iter().map(|j| Vec3::new(j[0], j[1], j[2])).collect();
    let per_seg = RINGS * SIDES + 2;
    let nv = NUM_JOINTS * per_seg;

    let mut template = Vec::with_capacity(nv);
    let mut faces = Vec::new();
    let mut skin = vec![0.0; nv * NUM_JOINTS];
    let mut regressor = vec![0.0; NUM_JOINTS * nv];
    // per vertex: owning segment and radial offset from its axis
    let mut owner = Vec::with_capacity(nv);
    let mut radial = Vec::with_capacity(nv);

    for j in 0..NUM_JOINTS {
        let start = joints[j];
        let (end, child) = match target(j) {
            Target::Joint(c) => (joints[c], Some(c)),
            Target::Offset(o) => (start + Vec3::new(o[0], o[1], o[2]), None),
        };
        let axis = (end - start).normalize();
        let reference = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::y() };
        let e_depth = (reference - axis * reference.dot(&axis)).normalize();
        let e_lat = axis.cross(&e_depth);
        let (ra, rb) = radii(j);
        let base = template.len();
        let mut push = |p: Vec3, t: f64, r: Vec3, template: &mut Vec<Vec3>| {
            let i = template.len();
            template.push(p);
            owner.push(j);
            radial.push(r);
            // blend toward the parent at the start, toward the child at the end
            let mut w_parent = 0.0;
            let mut w_child = 0.0;
            if let Some(p) = parents[j] {
                if t < 0.25 {
                    w_parent = 0.5 * (1.0 - t / 0.25);
                }
                skin[i * NUM_JOINTS + p] += w_parent;
            }
            if let Some(c) = child {
                if t > 0.75 {
                    w_child = 0.5 * (t - 0.75) / 0.25;
                }
                skin[i * NUM_JOINTS + c] += w_child;
            }
            skin[i * NUM_JOINTS + j] += 1.0 - w_parent - w_child;
        };
        for k in 0..RINGS {
            let t = k as f64 / (RINGS - 1) as f64;
            let center = start + (end - start) * t;
            let bulge = 0.9 + 0.1 * (std::f64::consts::PI * t).sin();
            for s in 0..SIDES {
                let phi = std::f64::consts::TAU * s as f64 / SIDES as f64;
                let r = bulge * (rb * phi.cos() * e_depth + ra * phi.sin() * e_lat);
                push(center + r, t, r, &mut template);
            }
        }
        let rmin = ra.min(rb);
        push(start - axis * 0.4 * rmin, 0.0, Vec3::zeros(), &mut template);
        push(end + axis * 0.4 * rmin, 1.0, Vec3::zeros(), &mut template);

        let ring = |k: usize, s: usize| base + k * SIDES + s % SIDES;
        for k in 0..RINGS - 1 {
            for s in 0..SIDES {
                faces.push([ring(k, s), ring(k, s + 1), ring(k + 1, s)]);
                faces.push([ring(k, s + 1), ring(k + 1, s + 1), ring(k + 1, s)]);
            }
        }
        let (c0, c1) = (base + RINGS * SIDES, base + RINGS * SIDES + 1);
        for s in 0..SIDES {
            faces.push([c0, ring(0, s + 1), ring(0, s)]);
            faces.push([c1, ring(RINGS - 1, s), ring(RINGS - 1, s + 1)]);
        }
        for s in 0..SIDES {
            regressor[j * nv + ring(0, s)] = 1.0 / SIDES as f64;
        }
    }

    let mut shape_dirs = vec![0.0; nv * 3 * NUM_BETAS];
    let hip_y = joints[1].y;
    let shoulder_x = joints[16].x;
    for (i, v) in template.iter().enumerate() {
        let j = owner[i];
        let mut dirs = [Vec3::zeros(); NUM_BETAS];
        dirs[0] = 0.04 * v;
        dirs[1] = 0.15 * radial[i];
        if is_leg(j) {
            dirs[2] = Vec3::new(0.0, 0.08 * (v.y - hip_y), 0.0);
        }
        if is_arm(j) {
            dirs[3] = Vec3::new(0.08 * (v.x.abs() - shoulder_x).max(0.0) * v.x.signum(), 0.0, 0.0);
        }
        if is_torso(j) {
            dirs[4] = Vec3::new(0.0, 0.0, 0.2 * radial[i].z.max(0.0));
        }
        for (k, d) in dirs.iter_mut().enumerate().skip(5) {
            let f = k as f64;
            *d = 0.01
                * Vec3::new(
                    (2.0 * f * v.y + f).sin(),
                    (1.5 * f * v.x + 0.5 * f).sin(),
                    (f * v.y + 2.0 * f * v.x).cos(),
                );
        }
        for c in 0..3 {
            for (b, d) in dirs.iter().enumerate() {
                shape_dirs[(i * 3 + c) * NUM_BETAS + b] = d[c];
            }
        }
    }

    LBSBodyModel::new(template, faces, shape_dirs, NUM_BETAS, regressor, skin, parents)
        .expect("mannequin satisfies the body-model invariants")
}

/// Three-joint articulated bar (root, elbow, tip) with two shape
/// coefficients, small enough for finite-difference checks.
pub fn toy_chain() -> LBSBodyModel {
    let sides = 6;
    let rings = 9;
    let length = 0.6;
    let mut template = Vec::new();
    let mut skin = Vec::new();
    let nj = 3;
    for k in 0..rings {
        let x = length * k as f64 / (rings - 1) as f64;
        for s in 0..sides {
            let phi = std::f64::consts::TAU * s as f64 / sides as f64;
            template.push(Vec3::new(x, 0.05 * phi.sin(), 0.05 * phi.cos()));
            // smooth weights: joint 0 over [0, 0.3], joint 1 over [0.3, 0.5], joint 2 beyond
            let w1 = ((x - 0.2) / 0.2).clamp(0.0, 1.0);
            let w2 = ((x - 0.45) / 0.1).clamp(0.0, 1.0);
            let mut w = [1.0 - w1, w1 * (1.0 - w2), w1 * w2];
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            skin.extend_from_slice(&w);
        }
    }
    let nv = template.len();
    let mut faces = Vec::new();
    for k in 0..rings - 1 {
        for s in 0..sides {
            let a = k * sides + s;
            let b = k * sides + (s + 1) % sides;
            let c = (k + 1) * sides + s;
            let d = (k + 1) * sides + (s + 1) % sides;
            faces.push([a, b, c]);
            faces.push([b, d, c]);
        }
    }
    let mut regressor = vec![0.0; nj * nv];
    for (j, k) in [0usize, 4, 8].iter().enumerate() {
        for s in 0..sides {
            regressor[j * nv + k * sides + s] = 1.0 / sides as f64;
        }
    }
    let mut shape_dirs = vec![0.0; nv * 3 * 2];
    for (i, v) in template.iter().enumerate() {
        // stretch along the bar, thicken
        let d0 = Vec3::new(0.1 * v.x, 0.0, 0.0);
        let d1 = Vec3::new(0.0, 0.3 * v.y, 0.3 * v.z);
        for c in 0..3 {
            shape_dirs[(i * 3 + c) * 2] = d0[c];
            shape_dirs[(i * 3 + c) * 2 + 1] = d1[c];
        }
    }
    LBSBodyModel::new(template, faces, shape_dirs, 2, regressor, skin, vec![None, Some(0), Some(1)])
        .expect("toy chain satisfies the body-model invariants")
}
