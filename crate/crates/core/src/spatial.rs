//! Spatial Coherence (SC).
//!
//! Each frame is described by the distances between part centroids and the
//! angle of every limb against the torso axis. Reference statistics from a
//! corpus turn those into z-scores, a Gaussian kernel turns z-scores into
//! consistency terms in `(0, 1]`, and the per-frame value is the mean of the
//! available terms. SC is the mean over frames.
//!
//! A limb whose end joint sits on its centroid, or a collapsed torso, has no
//! direction. Such angle terms are skipped for that frame and listed in the
//! report.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::motion::{centroid_of, dot, norm, sub, MotionSequence, PartitionMap, Point3};
use crate::temporal::CoherenceParams;

/// Guard below which a direction vector counts as degenerate.
pub const DIRECTION_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyStats {
    pub mean: f64,
    pub std: f64,
}

/// Corpus statistics of inter-part distances (length units) and limb-torso
/// angles (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefStats {
    pub skeleton: String,
    /// Number of pooled frames.
    pub count: usize,
    /// SHA-256 over the skeleton id, sequence ids and coordinates.
    pub digest: String,
    pub pairs: BTreeMap<String, KeyStats>,
    pub angles: BTreeMap<String, KeyStats>,
    /// Angle keys with no valid frame in the corpus; their std is set to epsilon.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate_angles: Vec<String>,
}

impl RefStats {
    pub fn from_json(text: &str) -> Result<Self> {
        let stats: RefStats = serde_json::from_str(text)?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite stats serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::validation("reference stats need at least 2 samples"));
        }
        for (key, s) in self.pairs.iter().chain(&self.angles) {
            if !(s.mean.is_finite() && s.std.is_finite() && s.std >= 0.0) {
                return Err(Error::validation(format!("bad statistics for `{key}`")));
            }
        }
        Ok(())
    }

    /// Checks that every pair and angle part of `partition` has an entry.
    pub fn check_covers(&self, partition: &PartitionMap) -> Result<()> {
        for (g, h) in partition.pairs() {
            let key = partition.pair_key(g, h);
            if !self.pairs.contains_key(&key) {
                return Err(Error::validation(format!("reference stats lack pair `{key}`")));
            }
        }
        for part in partition.angle_parts() {
            if !self.angles.contains_key(part) {
                return Err(Error::validation(format!("reference stats lack angle `{part}`")));
            }
        }
        Ok(())
    }
}

/// Distance between the centroids of parts `g` and `h` at frame `t`.
pub fn inter_part_distance(seq: &MotionSequence, partition: &PartitionMap, g: &str, h: &str, t: usize) -> Result<f64> {
    if g == h {
        return Err(Error::validation(format!("distance of part `{g}` to itself")));
    }
    let a = centroid_of(seq, &partition.part(g)?.joints, t)?;
    let b = centroid_of(seq, &partition.part(h)?.joints, t)?;
    Ok(norm(sub(a, b)))
}

/// Angle between the limb direction (centroid to end joint) and the torso axis.
pub fn part_torso_angle(seq: &MotionSequence, partition: &PartitionMap, g: &str, t: usize) -> Result<f64> {
    if !partition.angle_parts().iter().any(|p| p == g) {
        return Err(Error::validation(format!("part `{g}` has no angle term")));
    }
    let torso = torso_direction(seq, partition, t).ok_or_else(|| Error::DegenerateGeometry {
        part: "torso".into(),
        frame: t,
    })?;
    let part = partition.part(g)?;
    limb_angle(seq, &part.joints, part.end_joint, torso, t)?.ok_or_else(|| Error::DegenerateGeometry {
        part: g.to_string(),
        frame: t,
    })
}

/// `exp(-z^2 / beta^2)`.
pub fn consistency_score(z: f64, beta: f64) -> f64 {
    (-(z * z) / (beta * beta)).exp()
}

fn unit(v: Point3) -> Option<Point3> {
    let n = norm(v);
    (n > DIRECTION_EPS).then(|| v.map(|c| c / n))
}

fn torso_direction(seq: &MotionSequence, partition: &PartitionMap, t: usize) -> Option<Point3> {
    let axis = partition.torso();
    unit(sub(seq.position(t, axis.tip), seq.position(t, axis.origin)))
}

fn limb_angle(seq: &MotionSequence, joints: &[usize], end: usize, torso: Point3, t: usize) -> Result<Option<f64>> {
    let c = centroid_of(seq, joints, t)?;
    Ok(unit(sub(seq.position(t, end), c)).map(|u| dot(u, torso).clamp(-1.0, 1.0).acos()))
}

/// Distances in pair order and angles in angle-part order for one frame.
struct FrameGeometry {
    distances: Vec<f64>,
    angles: Vec<Option<f64>>,
}

fn frame_geometry(seq: &MotionSequence, partition: &PartitionMap, t: usize) -> Result<FrameGeometry> {
    let centroids = partition
        .parts()
        .iter()
        .map(|p| centroid_of(seq, &p.joints, t))
        .collect::<Result<Vec<_>>>()?;
    let distances = partition
        .pairs()
        .into_iter()
        .map(|(g, h)| norm(sub(centroids[g], centroids[h])))
        .collect();
    let torso = torso_direction(seq, partition, t);
    let angles = partition
        .angle_parts()
        .iter()
        .map(|name| {
            let idx = partition.part_index(name)?;
            let part = &partition.parts()[idx];
            Ok(torso.and_then(|axis| {
                unit(sub(seq.position(t, part.end_joint), centroids[idx]))
                    .map(|u| dot(u, axis).clamp(-1.0, 1.0).acos())
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameGeometry { distances, angles })
}

fn sequence_geometry(seq: &MotionSequence, partition: &PartitionMap) -> Result<Vec<FrameGeometry>> {
    partition.check_joint_count(seq.joint_count())?;
    (0..seq.frame_count()).map(|t| frame_geometry(seq, partition, t)).collect()
}

fn corpus_digest(skeleton: &str, corpus: &[(&str, &MotionSequence)]) -> String {
    let mut h = Sha256::new();
    h.update(skeleton.as_bytes());
    h.update([0]);
    for (id, seq) in corpus {
        h.update(id.as_bytes());
        h.update([0]);
        h.update((seq.frame_count() as u64).to_le_bytes());
        h.update((seq.joint_count() as u64).to_le_bytes());
        for p in seq.positions() {
            for c in p {
                h.update(c.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Pools per-frame distances and angles over the corpus. Sequences are
/// processed in id order, so the result does not depend on input order.
pub fn build_reference_stats(
    corpus: &[(String, MotionSequence)],
    partition: &PartitionMap,
    epsilon: f64,
) -> Result<RefStats> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::validation("reference corpus is empty"))?;
    let skeleton = first.1.skeleton_id().to_string();
    let mut ordered: Vec<(&str, &MotionSequence)> = corpus.iter().map(|(id, s)| (id.as_str(), s)).collect();
    ordered.sort_by(|a, b| a.0.cmp(b.0));
    let mut seen = HashSet::new();
    for (id, seq) in &ordered {
        if !seen.insert(*id) {
            return Err(Error::validation(format!("duplicate corpus id `{id}`")));
        }
        if seq.skeleton_id() != skeleton {
            return Err(Error::validation(format!(
                "corpus mixes skeletons `{skeleton}` and `{}` (sequence `{id}`)",
                seq.skeleton_id()
            )));
        }
    }

    let geometry = ordered
        .par_iter()
        .map(|(_, seq)| sequence_geometry(seq, partition))
        .collect::<Result<Vec<_>>>()?;
    let frames: Vec<&FrameGeometry> = geometry.iter().flatten().collect();

    let mut pairs = BTreeMap::new();
    for (i, (g, h)) in partition.pairs().into_iter().enumerate() {
        let values: Vec<f64> = frames.iter().map(|f| f.distances[i]).collect();
        pairs.insert(partition.pair_key(g, h), mean_std(&values).expect("non-empty corpus"));
    }
    let mut angles = BTreeMap::new();
    let mut degenerate_angles = Vec::new();
    for (i, name) in partition.angle_parts().iter().enumerate() {
        let values: Vec<f64> = frames.iter().filter_map(|f| f.angles[i]).collect();
        let stats = match mean_std(&values) {
            Some(s) => s,
            None => {
                log::warn!("angle `{name}` is degenerate in every corpus frame");
                degenerate_angles.push(name.clone());
                KeyStats { mean: 0.0, std: epsilon }
            }
        };
        angles.insert(name.clone(), stats);
    }

    Ok(RefStats {
        digest: corpus_digest(&skeleton, &ordered),
        skeleton,
        count: frames.len(),
        pairs,
        angles,
        degenerate_angles,
    })
}

/// Population mean and std, two-pass.
fn mean_std(values: &[f64]) -> Option<KeyStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(KeyStats { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegenerateAngle {
    pub part: String,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialReport {
    pub score: f64,
    pub per_frame: Vec<f64>,
    /// Mean distance term per pair key.
    pub pair_terms: BTreeMap<String, f64>,
    /// Mean angle term per part over its valid frames; `None` if never valid.
    pub angle_terms: BTreeMap<String, Option<f64>>,
    /// Angle terms skipped for lack of a direction.
    pub degenerate: Vec<DegenerateAngle>,
}

pub fn spatial_coherence(
    seq: &MotionSequence,
    partition: &PartitionMap,
    stats: &RefStats,
    params: &CoherenceParams,
) -> Result<SpatialReport> {
    params.validate()?;
    if seq.skeleton_id() != stats.skeleton {
        return Err(Error::validation(format!(
            "sequence skeleton `{}` does not match stats skeleton `{}`",
            seq.skeleton_id(),
            stats.skeleton
        )));
    }
    stats.check_covers(partition)?;
    let pair_keys: Vec<String> = partition.pairs().into_iter().map(|(g, h)| partition.pair_key(g, h)).collect();
    let pair_stats: Vec<KeyStats> = pair_keys.iter().map(|k| stats.pairs[k]).collect();
    let angle_stats: Vec<KeyStats> = partition.angle_parts().iter().map(|p| stats.angles[p]).collect();
    let eps = params.epsilon;
    let term = |x: f64, s: KeyStats, beta: f64| consistency_score((x - s.mean) / (s.std + eps), beta);

    let geometry = sequence_geometry(seq, partition)?;
    let mut per_frame = Vec::with_capacity(geometry.len());
    let mut pair_sums = vec![0.0; pair_keys.len()];
    let mut angle_sums = vec![(0.0, 0usize); angle_stats.len()];
    let mut degenerate = Vec::new();
    for (t, frame) in geometry.iter().enumerate() {
        let mut total = 0.0;
        let mut terms = 0usize;
        for (i, &d) in frame.distances.iter().enumerate() {
            let v = term(d, pair_stats[i], params.beta_d);
            pair_sums[i] += v;
            total += v;
            terms += 1;
        }
        for (i, angle) in frame.angles.iter().enumerate() {
            match angle {
                Some(theta) => {
                    let v = term(*theta, angle_stats[i], params.beta_theta);
                    angle_sums[i].0 += v;
                    angle_sums[i].1 += 1;
                    total += v;
                    terms += 1;
                }
                None => degenerate.push(DegenerateAngle {
                    part: partition.angle_parts()[i].clone(),
                    frame: t,
                }),
            }
        }
        per_frame.push(if terms == 0 { 0.0 } else { total / terms as f64 });
    }
    let frames = per_frame.len() as f64;
    Ok(SpatialReport {
        score: per_frame.iter().sum::<f64>() / frames,
        per_frame,
        pair_terms: pair_keys.into_iter().zip(pair_sums).map(|(k, s)| (k, s / frames)).collect(),
        angle_terms: partition
            .angle_parts()
            .iter()
            .cloned()
            .zip(angle_sums)
            .map(|(k, (s, n))| (k, (n > 0).then(|| s / n as f64)))
            .collect(),
        degenerate,
    })
}
