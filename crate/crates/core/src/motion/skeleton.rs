use crate::error::{Error, Result};

pub const HUMANML3D_22: &str = "humanml3d22";
pub const KITML_21: &str = "kitml21";

/// SMPL-derived 22-joint ordering used by HumanML3D.
const HUMANML3D_JOINTS: [&str; 22] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
];

/// KIT-ML 21-joint ordering (root, spine chain, arms, then legs).
const KITML_JOINTS: [&str; 21] = [
    "root",
    "torso",
    "chest",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "left_midfoot",
    "left_foot",
    "right_hip",
    "right_knee",
    "right_ankle",
    "right_midfoot",
    "right_foot",
];

/// Joint table of a skeleton plus the two joints spanning the torso axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonSpec {
    pub id: String,
    pub joint_names: Vec<String>,
    pub torso_origin: usize,
    pub torso_tip: usize,
}

impl SkeletonSpec {
    pub fn new(
        id: impl Into<String>,
        joint_names: Vec<String>,
        torso_origin: usize,
        torso_tip: usize,
    ) -> Result<Self> {
        let spec = SkeletonSpec {
            id: id.into(),
            joint_names,
            torso_origin,
            torso_tip,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One of the shipped skeletons (`humanml3d22`, `kitml21`).
    pub fn builtin(id: &str) -> Result<Self> {
        let (names, origin, tip): (&[&str], &str, &str) = match id {
            HUMANML3D_22 => (&HUMANML3D_JOINTS, "pelvis", "neck"),
            KITML_21 => (&KITML_JOINTS, "root", "neck"),
            other => return Err(Error::UnknownSkeleton(other.to_string())),
        };
        let joint_names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let index = |name: &str| names.iter().position(|n| *n == name).unwrap();
        Self::new(id, joint_names, index(origin), index(tip))
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    fn validate(&self) -> Result<()> {
        let n = self.joint_names.len();
        if n == 0 {
            return Err(Error::validation("skeleton has no joints"));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.joint_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::validation(format!("duplicate joint name `{name}`")));
            }
        }
        if self.torso_origin >= n || self.torso_tip >= n {
            return Err(Error::validation("torso joint index out of range"));
        }
        if self.torso_origin == self.torso_tip {
            return Err(Error::validation("torso origin and tip must differ"));
        }
        Ok(())
    }
}

/// Joint count of a shipped skeleton, `None` for custom identifiers.
pub fn builtin_joint_count(id: &str) -> Option<usize> {
    match id {
        HUMANML3D_22 => Some(HUMANML3D_JOINTS.len()),
        KITML_21 => Some(KITML_JOINTS.len()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn humanml3d_table() {
        let s = SkeletonSpec::builtin(HUMANML3D_22).unwrap();
        assert_eq!(s.joint_count(), 22);
        assert_eq!(s.joint_index("pelvis"), Some(0));
        assert_eq!(s.joint_index("right_wrist"), Some(21));
        assert_eq!(s.torso_origin, 0);
        assert_eq!(s.torso_tip, 12);
    }

    #[test]
    fn kit_table() {
        let s = SkeletonSpec::builtin(KITML_21).unwrap();
        assert_eq!(s.joint_count(), 21);
        assert_eq!(s.torso_tip, 3);
    }

    #[test]
    fn rejects_bad_specs() {
        let names = vec!["a".to_string(), "a".to_string()];
        assert!(SkeletonSpec::new("x", names, 0, 1).is_err());
        let names = vec!["a".to_string(), "b".to_string()];
        assert!(SkeletonSpec::new("x", names.clone(), 1, 1).is_err());
        assert!(SkeletonSpec::new("x", names, 0, 2).is_err());
        assert!(matches!(
            SkeletonSpec::builtin("smplx55"),
            Err(Error::UnknownSkeleton(_))
        ));
    }
}
