//! Motion data model: joint-position sequences, skeleton tables and body-part
//! partitions, plus the JSON/CSV motion file formats.

mod io;
pub mod partition;
pub mod skeleton;

pub use io::{parse_motion, MotionDefaults, MotionFormat};
pub use partition::{coarse_partition, default_partition, pair_key, BodyPart, PartitionMap, TorsoAxis};
pub use skeleton::{builtin_joint_count, SkeletonSpec, HUMANML3D_22, KITML_21};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// `T` frames of `J` joint positions. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    skeleton_id: String,
    fps: f64,
    frames: usize,
    joints: usize,
    positions: Vec<Point3>,
}

impl MotionSequence {
    pub fn new(skeleton_id: impl Into<String>, fps: f64, frames: Vec<Vec<Point3>>) -> Result<Self> {
        let joints = frames.first().map_or(0, Vec::len);
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != joints) {
            return Err(Error::validation(format!(
                "frame {t} has {} joints, frame 0 has {joints}",
                f.len()
            )));
        }
        let frame_count = frames.len();
        let positions = frames.into_iter().flatten().collect();
        Self::from_flat(skeleton_id, fps, frame_count, joints, positions)
    }

    /// Builds from a frame-major flat buffer of `frames * joints` points.
    pub fn from_flat(
        skeleton_id: impl Into<String>,
        fps: f64,
        frames: usize,
        joints: usize,
        positions: Vec<Point3>,
    ) -> Result<Self> {
        let skeleton_id = skeleton_id.into();
        if frames < 2 {
            return Err(Error::InsufficientFrames { needed: 2, got: frames });
        }
        if joints == 0 {
            return Err(Error::validation("sequence has no joints"));
        }
        if positions.len() != frames * joints {
            return Err(Error::dims("position buffer", frames * joints, positions.len()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::validation(format!("fps must be positive, got {fps}")));
        }
        if let Some(expected) = builtin_joint_count(&skeleton_id) {
            if expected != joints {
                return Err(Error::validation(format!(
                    "skeleton `{skeleton_id}` has {expected} joints, sequence has {joints}"
                )));
            }
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::validation(format!(
                "non-finite coordinate at frame {}, joint {}",
                i / joints,
                i % joints
            )));
        }
        Ok(MotionSequence {
            skeleton_id,
            fps,
            frames,
            joints,
            positions,
        })
    }

    pub fn skeleton_id(&self) -> &str {
        &self.skeleton_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_count(&self) -> usize {
        self.frames
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    pub fn position(&self, t: usize, j: usize) -> Point3 {
        self.positions[t * self.joints + j]
    }

    pub fn frame(&self, t: usize) -> &[Point3] {
        &self.positions[t * self.joints..(t + 1) * self.joints]
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    /// Applies `f` to every point, keeping the skeleton and frame rate.
    pub fn map_points(&self, f: impl Fn(Point3) -> Point3) -> Result<Self> {
        Self::from_flat(
            self.skeleton_id.clone(),
            self.fps,
            self.frames,
            self.joints,
            self.positions.iter().map(|&p| f(p)).collect(),
        )
    }
}

/// Arithmetic mean of the part's joint positions at frame `t`.
pub fn part_centroid(seq: &MotionSequence, partition: &PartitionMap, part: &str, t: usize) -> Result<Point3> {
    let part = partition.part(part)?;
    centroid_of(seq, &part.joints, t)
}

pub(crate) fn centroid_of(seq: &MotionSequence, joints: &[usize], t: usize) -> Result<Point3> {
    if t >= seq.frame_count() {
        return Err(Error::validation(format!(
            "frame {t} out of range for {} frames",
            seq.frame_count()
        )));
    }
    if let Some(&j) = joints.iter().find(|&&j| j >= seq.joint_count()) {
        return Err(Error::validation(format!("joint {j} out of range")));
    }
    let mut sum = [0.0; 3];
    for &j in joints {
        let p = seq.position(t, j);
        for k in 0..3 {
            sum[k] += p[k];
        }
    }
    let n = joints.len() as f64;
    Ok(sum.map(|s| s / n))
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
