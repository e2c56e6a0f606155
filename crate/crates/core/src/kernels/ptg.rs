//! Part-aware text grounding: diversified text transforms, their contrastive
//! diversity loss, the per-part gate and the auxiliary alignment loss.

use super::layers::{softmax, DenseStack};
use super::{Matrix, Vector};
use crate::error::{Error, Result};

pub const DIVERSITY_TAU: f64 = 0.05;

/// `K` transformed copies of a text embedding, one per MLP.
pub fn ptg_transform(c: &Vector, mlps: &[DenseStack]) -> Result<Vec<Vector>> {
    if mlps.is_empty() {
        return Err(Error::validation("ptg needs at least one MLP"));
    }
    mlps.iter().map(|m| m.forward(c)).collect()
}

fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::validation("cosine similarity of a zero vector"));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Contrastive loss treating `c` as each transform's positive and the other
/// transforms as its negatives.
pub fn diversity_loss(c: &Vector, transformed: &[Vector], tau: f64) -> Result<f64> {
    let k = transformed.len();
    if k == 0 {
        return Err(Error::validation("diversity loss needs at least one transform"));
    }
    for t in transformed {
        if t.len() != c.len() {
            return Err(Error::dims("ptg embedding", c.len(), t.len()));
        }
    }
    let positives = transformed.iter().map(|t| cosine(t, c)).collect::<Result<Vec<_>>>()?;
    let mut sims = Matrix::zeros(k, k);
    for n in 0..k {
        for m in 0..k {
            if n != m {
                sims[(n, m)] = cosine(&transformed[n], &transformed[m])?;
            }
        }
    }
    diversity_loss_from_similarities(&positives, &sims, tau)
}

/// Same loss from precomputed similarities: `positives[n] = s(c'_n, c)` and
/// `negatives[(n, m)] = s(c'_n, c'_m)`; the diagonal is ignored.
pub fn diversity_loss_from_similarities(positives: &[f64], negatives: &Matrix, tau: f64) -> Result<f64> {
    let k = positives.len();
    if negatives.shape() != (k, k) {
        return Err(Error::dims("negative similarities", k, negatives.nrows()));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::validation(format!("temperature must be positive, got {tau}")));
    }
    let mut total = 0.0;
    for n in 0..k {
        let anchor = positives[n] / tau;
        let gaps: Vec<f64> = (0..k).filter(|&m| m != n).map(|m| negatives[(n, m)] / tau - anchor).collect();
        let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // -log(e^a / (e^a + sum e^b)) = log(1 + sum e^(b - a))
        total += if worst <= 0.0 {
            gaps.iter().map(|g| g.exp()).sum::<f64>().ln_1p()
        } else {
            worst + ((-worst).exp() + gaps.iter().map(|g| (g - worst).exp()).sum::<f64>()).ln()
        };
    }
    Ok(total / k as f64)
}

/// Softmax gate over `K` candidate embeddings (rows). `gate` scores each row
/// with one logit.
pub fn part_gate(embeddings: &Matrix, gate: &DenseStack) -> Result<(Vector, Vec<f64>)> {
    if gate.output_dim() != 1 {
        return Err(Error::dims("gate output", 1, gate.output_dim()));
    }
    if embeddings.nrows() == 0 {
        return Err(Error::validation("part gate needs at least one embedding"));
    }
    let logits: Vec<f64> = gate.forward_rows(embeddings)?.iter().copied().collect();
    let weights = softmax(&logits);
    let mut out = Vector::zeros(embeddings.ncols());
    for (w, row) in weights.iter().zip(embeddings.row_iter()) {
        out += row.transpose() * *w;
    }
    Ok((out, weights))
}

/// Mean absolute difference between the gated embedding and the part text
/// embedding.
pub fn aux_loss(gated: &Vector, part_text: &Vector) -> Result<f64> {
    if gated.len() != part_text.len() || gated.is_empty() {
        return Err(Error::dims("aux loss", part_text.len(), gated.len()));
    }
    Ok((gated - part_text).abs().sum() / gated.len() as f64)
}
