//! Feature-space metrics over embedding dumps.
//!
//! Every seeded sampler walks records in id order, so results depend only on
//! the data and the seed, never on file order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{euclidean, EmbeddingSet};
use crate::error::{Error, Result};

/// Default retrieval pool: the true text plus 31 distractors.
pub const POOL_SIZE: usize = 32;
pub const DIVERSITY_PAIRS: usize = 300;
pub const MULTIMODALITY_PAIRS: usize = 10;

const SYMMETRY_TOL: f64 = 1e-9;
const NEGATIVE_EIGEN_TOL: f64 = 1e-8;
const RIDGE_TRIGGER: f64 = 1e-10;
const RIDGE: f64 = 1e-6;

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Eigenvalues down to `-1e-8` (relative to the largest magnitude) are treated
/// as round-off and clipped to zero.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vectors, values) = psd_eigen(m)?;
    let roots = DVector::from_iterator(values.len(), values.iter().map(|v| v.max(0.0).sqrt()));
    let s = &vectors * DMatrix::from_diagonal(&roots) * vectors.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

fn psd_eigen(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !m.is_square() {
        return Err(Error::dims("matrix square root", m.nrows(), m.ncols()));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::validation("matrix is not symmetric"));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&v| v < -NEGATIVE_EIGEN_TOL * top.max(1.0)) {
        return Err(Error::validation("matrix is not positive semi-definite"));
    }
    Ok((eig.eigenvectors, eig.eigenvalues))
}

/// Sample mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianSummary {
    pub fn from_set(set: &EmbeddingSet) -> Result<Self> {
        Self::from_rows(set.vectors(), set.dim())
    }

    pub fn from_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.collect();
        let n = rows.len();
        if n < 2 {
            return Err(Error::validation(format!("need at least 2 samples, got {n}")));
        }
        let mut mean = DVector::zeros(dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::dims("feature row", dim, r.len()));
            }
            mean += DVector::from_column_slice(r);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for r in &rows {
            let d = DVector::from_column_slice(r) - &mean;
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= (n - 1) as f64;
        Ok(GaussianSummary { mean, cov, n })
    }

    /// Covariance with `1e-6 * I` added when it is numerically singular.
    fn regularized_cov(&self) -> DMatrix<f64> {
        let min = SymmetricEigen::new(self.cov.clone()).eigenvalues.min();
        if min < RIDGE_TRIGGER {
            &self.cov + DMatrix::identity(self.cov.nrows(), self.cov.ncols()) * RIDGE
        } else {
            self.cov.clone()
        }
    }
}

/// Frechet distance between the Gaussian fits of two feature sets.
pub fn fid(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dims("fid feature dimension", a.dim(), b.dim()));
    }
    fid_from_summaries(&GaussianSummary::from_set(a)?, &GaussianSummary::from_set(b)?)
}

pub fn fid_from_summaries(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::dims("fid feature dimension", a.mean.len(), b.mean.len()));
    }
    let s1 = a.regularized_cov();
    let s2 = b.regularized_cov();
    let root1 = matrix_sqrt_psd(&s1)?;
    let inner = &root1 * &s2 * &root1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let (_, values) = psd_eigen(&inner)?;
    let cross: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    let shift = (&a.mean - &b.mean).norm_squared();
    let value = shift + s1.trace() + s2.trace() - 2.0 * cross;
    if value < 0.0 {
        log::debug!("fid clamped from {value:e} to 0");
        return Ok(0.0);
    }
    Ok(value)
}

/// Rank-based retrieval rate for one seed, for every `k` in `1..=max_k`.
///
/// Each record's pool holds its own text and `pool_size - 1` texts of other
/// records, drawn without replacement. Texts are ranked by distance to the
/// record's motion vector; equal distances rank by record id.
pub fn r_precision_curve(set: &EmbeddingSet, max_k: usize, pool_size: usize, seed: u64) -> Result<Vec<f64>> {
    let pairs = set.pairs()?;
    let n = pairs.len();
    if pool_size < 2 || n < pool_size {
        return Err(Error::validation(format!(
            "r-precision needs at least {pool_size} records (pool size >= 2), got {n}"
        )));
    }
    if max_k == 0 || max_k > pool_size {
        return Err(Error::validation(format!("k must lie in 1..={pool_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; max_k];
    for (i, &(_, motion)) in pairs.iter().enumerate() {
        let own = euclidean(motion, pairs[i].0);
        let mut rank = 0;
        for pick in index::sample(&mut rng, n - 1, pool_size - 1) {
            let j = if pick >= i { pick + 1 } else { pick };
            let d = euclidean(motion, pairs[j].0);
            if d < own || (d == own && j < i) {
                rank += 1;
            }
        }
        for (k, h) in hits.iter_mut().enumerate() {
            if rank <= k {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / n as f64).collect())
}

pub fn r_precision(set: &EmbeddingSet, k: usize, pool_size: usize, seed: u64) -> Result<f64> {
    Ok(r_precision_curve(set, k, pool_size, seed)?[k - 1])
}

/// Mean distance between each text vector and its motion vector.
pub fn mm_dist(set: &EmbeddingSet) -> Result<f64> {
    let pairs = set.pairs()?;
    Ok(pairs.iter().map(|(t, m)| euclidean(t, m)).sum::<f64>() / pairs.len() as f64)
}

/// Pair count diversity will actually use for `n` records.
pub fn diversity_pair_count(n: usize, n_pairs: usize) -> usize {
    n_pairs.min(n / 2)
}

/// Mean distance over `n_pairs` disjoint random pairs of records.
pub fn diversity(set: &EmbeddingSet, n_pairs: usize, seed: u64) -> Result<f64> {
    let n = set.len();
    let used = diversity_pair_count(n, n_pairs);
    if used == 0 {
        return Err(Error::validation(format!("diversity needs at least 2 records, got {n}")));
    }
    if used < n_pairs {
        log::warn!("diversity: {n} records allow only {used} disjoint pairs, {n_pairs} requested");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, n, 2 * used).into_vec();
    let records = set.records();
    let total: f64 = picks
        .chunks_exact(2)
        .map(|p| euclidean(&records[p[0]].vector, &records[p[1]].vector))
        .sum();
    Ok(total / used as f64)
}

fn groups(set: &EmbeddingSet) -> Result<BTreeMap<&str, Vec<&[f64]>>> {
    let mut out: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for r in set.records() {
        let key = r
            .group_key
            .as_deref()
            .ok_or_else(|| Error::validation(format!("record `{}` has no group", r.id)))?;
        out.entry(key).or_default().push(&r.vector);
    }
    Ok(out)
}

/// Groups with fewer than two members; multimodality skips them.
pub fn undersized_groups(set: &EmbeddingSet) -> Result<Vec<String>> {
    Ok(groups(set)?
        .into_iter()
        .filter(|(_, v)| v.len() < 2)
        .map(|(k, _)| k.to_string())
        .collect())
}

/// Mean within-group pair distance, averaged over groups.
pub fn multimodality(set: &EmbeddingSet, pairs_per_group: usize, seed: u64) -> Result<f64> {
    if pairs_per_group == 0 {
        return Err(Error::validation("pairs per group must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group_means = Vec::new();
    for (key, members) in groups(set)? {
        if members.len() < 2 {
            log::warn!("multimodality: group `{key}` has fewer than 2 members, skipped");
            continue;
        }
        let mut total = 0.0;
        for _ in 0..pairs_per_group {
            let i = rng.random_range(0..members.len());
            let mut j = rng.random_range(0..members.len() - 1);
            if j >= i {
                j += 1;
            }
            total += euclidean(members[i], members[j]);
        }
        group_means.push(total / pairs_per_group as f64);
    }
    if group_means.is_empty() {
        return Err(Error::validation("multimodality: no group has two members"));
    }
    Ok(group_means.iter().sum::<f64>() / group_means.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Metric {
    Fid,
    RPrecision { k: usize, pool_size: usize },
    MmDist,
    Diversity { n_pairs: usize },
    MultiModality { pairs_per_group: usize },
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Fid => "fid",
            Metric::RPrecision { .. } => "rprecision",
            Metric::MmDist => "mmdist",
            Metric::Diversity { .. } => "diversity",
            Metric::MultiModality { .. } => "multimodality",
        }
    }

    pub fn needs_reference(&self) -> bool {
        matches!(self, Metric::Fid)
    }

    /// One evaluation. `reference` is required for FID and ignored otherwise.
    pub fn evaluate(&self, gen: &EmbeddingSet, reference: Option<&EmbeddingSet>, seed: u64) -> Result<f64> {
        match *self {
            Metric::Fid => {
                let r = reference.ok_or_else(|| Error::validation("fid needs a reference set"))?;
                fid(gen, r)
            }
            Metric::RPrecision { k, pool_size } => r_precision(gen, k, pool_size, seed),
            Metric::MmDist => mm_dist(gen),
            Metric::Diversity { n_pairs } => diversity(gen, n_pairs, seed),
            Metric::MultiModality { pairs_per_group } => multimodality(gen, pairs_per_group, seed),
        }
    }

    fn notes(&self, gen: &EmbeddingSet) -> Result<Vec<String>> {
        let mut notes = Vec::new();
        match *self {
            Metric::Diversity { n_pairs } => {
                let used = diversity_pair_count(gen.len(), n_pairs);
                if used < n_pairs {
                    notes.push(format!("only {} records: {used} pairs used instead of {n_pairs}", gen.len()));
                }
            }
            Metric::MultiModality { .. } => {
                let small = undersized_groups(gen)?;
                if !small.is_empty() {
                    notes.push(format!("skipped groups with fewer than 2 members: {}", small.join(", ")));
                }
            }
            _ => {}
        }
        Ok(notes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRun {
    pub metric: String,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Half-width of the 95% interval, `1.96 * s / sqrt(reps)`.
    pub ci95: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricRun {
    pub fn from_values(metric: impl Into<String>, values: Vec<f64>, mut notes: Vec<String>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::validation("no repetitions"));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = if n == 1 {
            notes.push("single repetition: ci95 reported as 0".into());
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Ok(MetricRun { metric: metric.into(), values, mean, ci95, notes })
    }
}

/// Runs `metric` with seeds `seed, seed + 1, ...` in parallel and reduces in
/// repetition order.
pub fn repeated_eval(
    metric: &Metric,
    gen: &EmbeddingSet,
    reference: Option<&EmbeddingSet>,
    reps: usize,
    seed: u64,
) -> Result<MetricRun> {
    if reps == 0 {
        return Err(Error::validation("reps must be at least 1"));
    }
    let values = (0..reps as u64)
        .into_par_iter()
        .map(|i| metric.evaluate(gen, reference, seed.wrapping_add(i)))
        .collect::<Result<Vec<f64>>>()?;
    MetricRun::from_values(metric.name(), values, metric.notes(gen)?)
}
