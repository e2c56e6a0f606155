//! Seeded synthetic motion for tests, calibration and self-checks.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::motion::{builtin_joint_count, MotionSequence, PartitionMap, Point3, HUMANML3D_22, KITML_21};

const HUMANML3D_REST: [Point3; 22] = [
    [0.00, 0.93, 0.00],
    [0.06, 0.84, 0.00],
    [-0.06, 0.84, 0.00],
    [0.00, 1.04, 0.00],
    [0.10, 0.46, 0.00],
    [-0.10, 0.46, 0.00],
    [0.00, 1.17, 0.00],
    [0.10, 0.06, 0.00],
    [-0.10, 0.06, 0.00],
    [0.00, 1.22, 0.00],
    [0.11, 0.00, 0.12],
    [-0.11, 0.00, 0.12],
    [0.00, 1.43, 0.00],
    [0.08, 1.34, 0.00],
    [-0.08, 1.34, 0.00],
    [0.00, 1.52, 0.05],
    [0.17, 1.37, 0.00],
    [-0.17, 1.37, 0.00],
    [0.44, 1.30, 0.00],
    [-0.44, 1.30, 0.00],
    [0.69, 1.25, 0.05],
    [-0.69, 1.25, 0.05],
];

const KITML_REST: [Point3; 21] = [
    [0.00, 0.95, 0.00],
    [0.00, 1.10, 0.00],
    [0.00, 1.30, 0.00],
    [0.00, 1.45, 0.00],
    [0.00, 1.60, 0.00],
    [0.18, 1.40, 0.00],
    [0.45, 1.40, 0.00],
    [0.70, 1.40, 0.00],
    [-0.18, 1.40, 0.00],
    [-0.45, 1.40, 0.00],
    [-0.70, 1.40, 0.00],
    [0.09, 0.92, 0.00],
    [0.10, 0.50, 0.00],
    [0.10, 0.08, 0.00],
    [0.10, 0.02, 0.08],
    [0.10, 0.00, 0.16],
    [-0.09, 0.92, 0.00],
    [-0.10, 0.50, 0.00],
    [-0.10, 0.08, 0.00],
    [-0.10, 0.02, 0.08],
    [-0.10, 0.00, 0.16],
];

/// Standing T-pose-like rest pose of a built-in skeleton, in meters, +y up,
/// facing +z.
pub fn rest_pose(skeleton_id: &str) -> Result<Vec<Point3>> {
    match skeleton_id {
        HUMANML3D_22 => Ok(HUMANML3D_REST.to_vec()),
        KITML_21 => Ok(KITML_REST.to_vec()),
        other => Err(Error::UnknownSkeleton(other.to_string())),
    }
}

/// Applies `p -> R p + translation`, with `R` a rotation of `angle` radians
/// about `axis`.
pub fn rigid_transform(seq: &MotionSequence, axis: Point3, angle: f64, translation: Point3) -> Result<MotionSequence> {
    let axis = Unit::try_new(Vector3::from(axis), 1e-12).ok_or_else(|| Error::validation("zero rotation axis"))?;
    let rot = Rotation3::from_axis_angle(&axis, angle);
    seq.map_points(|p| {
        let q = rot * Vector3::from(p);
        [q.x + translation[0], q.y + translation[1], q.z + translation[2]]
    })
}

pub fn scaled(seq: &MotionSequence, factor: f64) -> Result<MotionSequence> {
    seq.map_points(|p| p.map(|c| c * factor))
}

/// The rest pose under a uniform random yaw about +y and a uniform ground-plane
/// offset in `[-1, 1]^2`, with i.i.d. `N(0, jitter^2)` noise on every
/// coordinate of every frame.
pub fn jittered_rest_sequence(skeleton_id: &str, frames: usize, jitter: f64, rng: &mut impl Rng) -> Result<MotionSequence> {
    let rest = rest_pose(skeleton_id)?;
    let yaw: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (s, c) = yaw.sin_cos();
    let off = [rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0)];
    let base: Vec<Point3> = rest
        .iter()
        .map(|p| [c * p[0] + s * p[2] + off[0], p[1], -s * p[0] + c * p[2] + off[2]])
        .collect();
    let noise = Normal::new(0.0, jitter).map_err(|e| Error::validation(e.to_string()))?;
    let mut out = Vec::with_capacity(frames * base.len());
    for _ in 0..frames {
        for p in &base {
            out.push([
                p[0] + noise.sample(rng),
                p[1] + noise.sample(rng),
                p[2] + noise.sample(rng),
            ]);
        }
    }
    MotionSequence::from_flat(skeleton_id, 20.0, frames, base.len(), out)
}

/// Independent standard-normal random walks, one per joint coordinate.
pub fn random_walk(skeleton_id: &str, joints: usize, frames: usize, rng: &mut impl Rng) -> Result<MotionSequence> {
    let joints = builtin_joint_count(skeleton_id).unwrap_or(joints);
    let mut pos = vec![[0.0; 3]; joints];
    let mut out = Vec::with_capacity(frames * joints);
    for _ in 0..frames {
        for p in pos.iter_mut() {
            for c in p.iter_mut() {
                let step: f64 = StandardNormal.sample(rng);
                *c += step;
            }
            out.push(*p);
        }
    }
    MotionSequence::from_flat(skeleton_id, 20.0, frames, joints, out)
}

/// Shared velocity profile `v(k) = 1 + 0.5 sin(2 pi (0.05 k + 0.01 k^2))` for
/// `k = 1..frames-1`.
pub fn chirp_profile(frames: usize) -> Vec<f64> {
    (1..frames)
        .map(|k| {
            let k = k as f64;
            1.0 + 0.5 * (std::f64::consts::TAU * (0.05 * k + 0.01 * k * k)).sin()
        })
        .collect()
}

/// Rest pose in which every joint of every part is displaced by `profile[k]`
/// between frames `k` and `k + 1`, so each part's RMS speed equals the shared
/// profile. Parts travel along different fixed directions.
pub fn phase_locked(skeleton_id: &str, partition: &PartitionMap, profile: &[f64]) -> Result<MotionSequence> {
    let rest = rest_pose(skeleton_id)?;
    partition.check_joint_count(rest.len())?;
    let mut dirs = vec![[0.0; 3]; rest.len()];
    for (i, part) in partition.parts().iter().enumerate() {
        let angle = i as f64 * 1.1;
        let d = [angle.cos() * 0.8, 0.6, angle.sin() * 0.8];
        for &j in &part.joints {
            dirs[j] = d;
        }
    }
    let mut pos = rest.clone();
    let mut out = rest.clone();
    for &v in profile {
        for (p, d) in pos.iter_mut().zip(&dirs) {
            for k in 0..3 {
                p[k] += v * d[k];
            }
        }
        out.extend_from_slice(&pos);
    }
    MotionSequence::from_flat(skeleton_id, 20.0, profile.len() + 1, rest.len(), out)
}
