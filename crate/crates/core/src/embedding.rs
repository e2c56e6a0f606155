//! Embedding dumps consumed by the feature-space metrics.
//!
//! One JSON object per line:
//! `{"id": "...", "vec": [...], "text_vec": [...], "motion_vec": [...], "group": "..."}`.
//! `vec` may be omitted when `motion_vec` is present; it then defaults to the
//! motion vector. Records are kept sorted by id so every seeded computation is
//! independent of file order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    #[serde(rename = "vec")]
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_vec: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_vec: Option<Vec<f64>>,
    #[serde(default, rename = "group", alias = "group_key", skip_serializing_if = "Option::is_none")]
    pub group_key: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    #[serde(default, rename = "vec")]
    vector: Option<Vec<f64>>,
    #[serde(default)]
    text_vec: Option<Vec<f64>>,
    #[serde(default)]
    motion_vec: Option<Vec<f64>>,
    #[serde(default, rename = "group", alias = "group_key")]
    group_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    records: Vec<EmbeddingRecord>,
    dim: usize,
}

impl EmbeddingSet {
    pub fn new(mut records: Vec<EmbeddingRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::validation("embedding set is empty"))?;
        let dim = first.vector.len();
        if dim == 0 {
            return Err(Error::validation("embedding vectors are empty"));
        }
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::validation(format!("duplicate embedding id `{}`", r.id)));
            }
            let fields = [Some(&r.vector), r.text_vec.as_ref(), r.motion_vec.as_ref()];
            for v in fields.into_iter().flatten() {
                if v.len() != dim {
                    return Err(Error::dims(format!("embedding `{}`", r.id), dim, v.len()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation(format!("non-finite value in embedding `{}`", r.id)));
                }
            }
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(EmbeddingSet { records, dim })
    }

    /// Builds a set from bare vectors, ids are zero-padded indices.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let width = vectors.len().to_string().len();
        Self::new(
            vectors
                .into_iter()
                .enumerate()
                .map(|(i, v)| EmbeddingRecord {
                    id: format!("{i:0width$}"),
                    vector: v,
                    text_vec: None,
                    motion_vec: None,
                    group_key: None,
                })
                .collect(),
        )
    }

    /// Builds a retrieval set from aligned text/motion vectors.
    pub fn from_pairs(text: Vec<Vec<f64>>, motion: Vec<Vec<f64>>) -> Result<Self> {
        if text.len() != motion.len() {
            return Err(Error::dims("text/motion pair count", text.len(), motion.len()));
        }
        let width = text.len().to_string().len();
        Self::new(
            text.into_iter()
                .zip(motion)
                .enumerate()
                .map(|(i, (t, m))| EmbeddingRecord {
                    id: format!("{i:0width$}"),
                    vector: m.clone(),
                    text_vec: Some(t),
                    motion_vec: Some(m),
                    group_key: None,
                })
                .collect(),
        )
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: idx + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            let vector = raw
                .vector
                .or_else(|| raw.motion_vec.clone())
                .ok_or_else(|| Error::validation(format!("record `{}` has neither vec nor motion_vec", raw.id)))?;
            records.push(EmbeddingRecord {
                id: raw.id,
                vector,
                text_vec: raw.text_vec,
                motion_vec: raw.motion_vec,
                group_key: raw.group_key,
            });
        }
        Self::new(records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("finite embeddings serialize"));
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.vector.as_slice())
    }

    /// Text/motion vector pairs in id order; errors if any record lacks one.
    pub fn pairs(&self) -> Result<Vec<(&[f64], &[f64])>> {
        self.records
            .iter()
            .map(|r| match (&r.text_vec, &r.motion_vec) {
                (Some(t), Some(m)) => Ok((t.as_slice(), m.as_slice())),
                _ => Err(Error::validation(format!(
                    "record `{}` lacks text_vec/motion_vec",
                    r.id
                ))),
            })
            .collect()
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
