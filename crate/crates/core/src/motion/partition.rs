//! Body-part partitions of a skeleton.
//!
//! The shipped five-part split (left/right arm, left/right leg, backbone) is
//! configuration: joint membership for each skeleton is documented below and
//! can be replaced wholesale with a partition override file.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::skeleton::{SkeletonSpec, HUMANML3D_22, KITML_21};
use crate::error::{Error, Result};

pub const LEFT_ARM: &str = "left_arm";
pub const RIGHT_ARM: &str = "right_arm";
pub const LEFT_LEG: &str = "left_leg";
pub const RIGHT_LEG: &str = "right_leg";
pub const BACKBONE: &str = "backbone";
pub const ARMS: &str = "arms";
pub const LEGS: &str = "legs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyPart {
    pub name: String,
    pub joints: Vec<usize>,
    /// Distal joint used for the part direction vector.
    pub end_joint: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorsoAxis {
    pub origin: usize,
    pub tip: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionMap {
    parts: Vec<BodyPart>,
    angle_parts: Vec<String>,
    torso: TorsoAxis,
}

impl PartitionMap {
    pub fn new(parts: Vec<BodyPart>, angle_parts: Vec<String>, torso: TorsoAxis) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::validation("partition has no parts"));
        }
        let mut names = HashSet::new();
        let mut used = HashSet::new();
        for part in &parts {
            if !names.insert(part.name.as_str()) {
                return Err(Error::validation(format!("duplicate part `{}`", part.name)));
            }
            if part.joints.is_empty() {
                return Err(Error::validation(format!("part `{}` has no joints", part.name)));
            }
            for &j in &part.joints {
                if !used.insert(j) {
                    return Err(Error::validation(format!(
                        "joint {j} appears in more than one part or twice in `{}`",
                        part.name
                    )));
                }
            }
            if !part.joints.contains(&part.end_joint) {
                return Err(Error::validation(format!(
                    "end joint {} is not a member of part `{}`",
                    part.end_joint, part.name
                )));
            }
        }
        for a in &angle_parts {
            if !names.contains(a.as_str()) {
                return Err(Error::UnknownPart(a.clone()));
            }
        }
        if torso.origin == torso.tip {
            return Err(Error::validation("torso origin and tip must differ"));
        }
        Ok(PartitionMap {
            parts,
            angle_parts,
            torso,
        })
    }

    pub fn parts(&self) -> &[BodyPart] {
        &self.parts
    }

    pub fn part(&self, name: &str) -> Result<&BodyPart> {
        self.parts
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownPart(name.to_string()))
    }

    pub fn part_index(&self, name: &str) -> Result<usize> {
        self.parts
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::UnknownPart(name.to_string()))
    }

    pub fn angle_parts(&self) -> &[String] {
        &self.angle_parts
    }

    pub fn torso(&self) -> TorsoAxis {
        self.torso
    }

    /// All unordered part pairs as index pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.parts.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect()
    }

    /// Report key for a pair: the two part names in alphabetical order joined by `|`.
    pub fn pair_key(&self, i: usize, j: usize) -> String {
        pair_key(&self.parts[i].name, &self.parts[j].name)
    }

    pub fn max_joint_index(&self) -> usize {
        self.parts
            .iter()
            .flat_map(|p| p.joints.iter().copied())
            .chain([self.torso.origin, self.torso.tip])
            .max()
            .unwrap_or(0)
    }

    /// Checks every referenced joint exists in a skeleton with `joint_count` joints.
    pub fn check_joint_count(&self, joint_count: usize) -> Result<()> {
        let max = self.max_joint_index();
        if max >= joint_count {
            return Err(Error::validation(format!(
                "partition references joint {max} but the sequence has {joint_count} joints"
            )));
        }
        Ok(())
    }

    pub fn from_override_json(text: &str) -> Result<Self> {
        let raw: PartitionFile = serde_json::from_str(text)?;
        raw.into_partition()
    }

    pub fn to_override_json(&self) -> String {
        let file = PartitionFile {
            parts: self
                .parts
                .iter()
                .map(|p| (p.name.clone(), p.joints.clone()))
                .collect(),
            end_joint: self
                .parts
                .iter()
                .map(|p| (p.name.clone(), p.end_joint))
                .collect(),
            angle_parts: self.angle_parts.clone(),
            torso: self.torso,
        };
        serde_json::to_string_pretty(&file).expect("partition serializes")
    }
}

pub fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

/// On-disk partition override.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    parts: BTreeMap<String, Vec<usize>>,
    end_joint: BTreeMap<String, usize>,
    angle_parts: Vec<String>,
    torso: TorsoAxis,
}

impl PartitionFile {
    fn into_partition(self) -> Result<PartitionMap> {
        let mut end_joint = self.end_joint;
        let parts = self
            .parts
            .into_iter()
            .map(|(name, joints)| {
                let end = end_joint
                    .remove(&name)
                    .ok_or_else(|| Error::validation(format!("no end joint for part `{name}`")))?;
                Ok(BodyPart {
                    name,
                    joints,
                    end_joint: end,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(extra) = end_joint.keys().next() {
            return Err(Error::UnknownPart(extra.clone()));
        }
        PartitionMap::new(parts, self.angle_parts, self.torso)
    }
}

fn part(skel: &SkeletonSpec, name: &str, joints: &[&str], end: &str) -> BodyPart {
    let idx = |j: &str| {
        skel.joint_index(j)
            .unwrap_or_else(|| panic!("joint `{j}` missing from {}", skel.id))
    };
    BodyPart {
        name: name.to_string(),
        joints: joints.iter().map(|j| idx(j)).collect(),
        end_joint: idx(end),
    }
}

/// Shipped five-part partition for a known skeleton.
///
/// Arms end at the wrist and legs at the foot; only the four limbs carry a
/// torso angle.
pub fn default_partition(skeleton_id: &str) -> Result<PartitionMap> {
    let skel = SkeletonSpec::builtin(skeleton_id)?;
    let parts = match skeleton_id {
        HUMANML3D_22 => vec![
            part(
                &skel,
                LEFT_ARM,
                &["left_collar", "left_shoulder", "left_elbow", "left_wrist"],
                "left_wrist",
            ),
            part(
                &skel,
                RIGHT_ARM,
                &["right_collar", "right_shoulder", "right_elbow", "right_wrist"],
                "right_wrist",
            ),
            part(
                &skel,
                LEFT_LEG,
                &["left_hip", "left_knee", "left_ankle", "left_foot"],
                "left_foot",
            ),
            part(
                &skel,
                RIGHT_LEG,
                &["right_hip", "right_knee", "right_ankle", "right_foot"],
                "right_foot",
            ),
            part(
                &skel,
                BACKBONE,
                &["pelvis", "spine1", "spine2", "spine3", "neck", "head"],
                "head",
            ),
        ],
        KITML_21 => vec![
            part(
                &skel,
                LEFT_ARM,
                &["left_shoulder", "left_elbow", "left_wrist"],
                "left_wrist",
            ),
            part(
                &skel,
                RIGHT_ARM,
                &["right_shoulder", "right_elbow", "right_wrist"],
                "right_wrist",
            ),
            part(
                &skel,
                LEFT_LEG,
                &["left_hip", "left_knee", "left_ankle", "left_midfoot", "left_foot"],
                "left_foot",
            ),
            part(
                &skel,
                RIGHT_LEG,
                &["right_hip", "right_knee", "right_ankle", "right_midfoot", "right_foot"],
                "right_foot",
            ),
            part(
                &skel,
                BACKBONE,
                &["root", "torso", "chest", "neck", "head"],
                "head",
            ),
        ],
        other => return Err(Error::UnknownSkeleton(other.to_string())),
    };
    let angle_parts = [LEFT_ARM, RIGHT_ARM, LEFT_LEG, RIGHT_LEG]
        .iter()
        .map(|s| s.to_string())
        .collect();
    PartitionMap::new(
        parts,
        angle_parts,
        TorsoAxis {
            origin: skel.torso_origin,
            tip: skel.torso_tip,
        },
    )
}

/// Coarse Arms/Legs grouping used by the part generators: each group is the
/// union of the left and right limbs of the five-part split.
pub fn coarse_partition(skeleton_id: &str) -> Result<PartitionMap> {
    let five = default_partition(skeleton_id)?;
    let merge = |name: &str, left: &str, right: &str| -> Result<BodyPart> {
        let l = five.part(left)?;
        let r = five.part(right)?;
        let mut joints = l.joints.clone();
        joints.extend(&r.joints);
        Ok(BodyPart {
            name: name.to_string(),
            joints,
            end_joint: l.end_joint,
        })
    };
    PartitionMap::new(
        vec![
            merge(ARMS, LEFT_ARM, RIGHT_ARM)?,
            merge(LEGS, LEFT_LEG, RIGHT_LEG)?,
        ],
        Vec::new(),
        five.torso(),
    )
}
