//! Temporal enhancement before quantization, nearest-code lookup and the
//! quantizer losses.

use super::layers::{gelu, softmax, Codebook, DenseStack};
use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Local temporal enhancement: frames are bundled into groups of `window`,
/// each frame is scored by the group's MLP and the group collapses to the
/// softmax-weighted sum of its frames.
///
/// `mlps` holds one stack per group or a single shared stack; each maps a
/// frame feature to one score. A trailing partial group is filled by repeating
/// the last frame.
pub fn lte_forward(frames: &Matrix, window: usize, mlps: &[DenseStack]) -> Result<Matrix> {
    let (t, d) = frames.shape();
    if t == 0 || window == 0 {
        return Err(Error::validation("lte needs at least one frame and a positive window"));
    }
    let groups = t.div_ceil(window);
    if mlps.len() != 1 && mlps.len() != groups {
        return Err(Error::dims("lte group MLPs", groups, mlps.len()));
    }
    for m in mlps {
        if m.input_dim() != d || m.output_dim() != 1 {
            return Err(Error::dims("lte MLP shape (in, out=1)", d, m.input_dim()));
        }
    }
    let mut out = Matrix::zeros(groups, d);
    for g in 0..groups {
        let rows: Vec<usize> = (0..window).map(|j| (g * window + j).min(t - 1)).collect();
        let group = frames.select_rows(rows.iter());
        let mlp = &mlps[if mlps.len() == 1 { 0 } else { g }];
        let scores: Vec<f64> = mlp.forward_rows(&group)?.iter().copied().collect();
        let alpha = softmax(&scores);
        for (j, a) in alpha.iter().enumerate() {
            for k in 0..d {
                out[(g, k)] += a * group[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Global temporal enhancement: `GELU(A_hat (nodes W))`.
pub fn gte_forward(nodes: &Matrix, adjacency: &Matrix, w: &Matrix) -> Result<Matrix> {
    if adjacency.nrows() != nodes.nrows() || adjacency.ncols() != nodes.nrows() {
        return Err(Error::dims("gte adjacency", nodes.nrows(), adjacency.nrows()));
    }
    if w.nrows() != nodes.ncols() {
        return Err(Error::dims("gte weight rows", nodes.ncols(), w.nrows()));
    }
    Ok((adjacency * (nodes * w)).map(gelu))
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the row sums of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::validation("adjacency must be a non-empty square matrix"));
    }
    if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::validation("adjacency entries must be finite and non-negative"));
    }
    let n = a.nrows();
    let with_loops = a + Matrix::identity(n, n);
    let inv_sqrt: Vec<f64> = with_loops.row_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    Ok(Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * with_loops[(i, j)] * inv_sqrt[j]))
}

/// Path graph over `n` consecutive groups.
pub fn chain_adjacency(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
}

/// LTE followed by GTE over the normalized temporal chain.
pub fn temporal_enhance(frames: &Matrix, window: usize, mlps: &[DenseStack], w: &Matrix) -> Result<Matrix> {
    let nodes = lte_forward(frames, window, mlps)?;
    let adjacency = normalize_adjacency(&chain_adjacency(nodes.nrows()))?;
    gte_forward(&nodes, &adjacency, w)
}

/// Nearest codebook entry by Euclidean distance; ties go to the lower index.
pub fn vq_quantize(feat: &Vector, codebook: &Codebook) -> Result<(usize, Vector)> {
    if feat.len() != codebook.dim() {
        return Err(Error::dims("vq feature", codebook.dim(), feat.len()));
    }
    let entries = codebook.entries();
    let mut best = (0, f64::INFINITY);
    for (i, row) in entries.row_iter().enumerate() {
        let d: f64 = row.iter().zip(feat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok((best.0, codebook.entry(best.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqLosses {
    /// Mean absolute reconstruction error.
    pub rec: f64,
    /// Mean squared gap between quantized and encoded features.
    pub app: f64,
    /// `rec + lambda_app * app`.
    pub vq: f64,
}

pub fn vq_losses(decoded: &Matrix, target: &Matrix, quantized: &Matrix, encoded: &Matrix, lambda_app: f64) -> Result<VqLosses> {
    if decoded.shape() != target.shape() || decoded.is_empty() {
        return Err(Error::dims("reconstruction", target.len(), decoded.len()));
    }
    if quantized.shape() != encoded.shape() || quantized.is_empty() {
        return Err(Error::dims("approximation", encoded.len(), quantized.len()));
    }
    let rec = (decoded - target).abs().sum() / decoded.len() as f64;
    let app = (quantized - encoded).norm_squared() / quantized.len() as f64;
    Ok(VqLosses { rec, app, vq: rec + lambda_app * app })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::layers::{Activation, DenseLayer};

    fn constant_scorer(d: usize) -> DenseStack {
        DenseStack::new(vec![DenseLayer { w: Matrix::zeros(d, 1), b: Vector::zeros(1), act: Activation::None }]).unwrap()
    }

    #[test]
    fn lte_uniform_scores_give_group_means() {
        let frames = Matrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let out = lte_forward(&frames, 2, &[constant_scorer(2)]).unwrap();
        assert_eq!(out, Matrix::from_row_slice(2, 2, &[1.0, 2.0, 5.0, 6.0]));
        assert_eq!(lte_forward(&frames, 1, &[constant_scorer(2)]).unwrap(), frames);
    }

    #[test]
    fn lte_pads_with_last_frame() {
        let frames = Matrix::from_row_slice(3, 1, &[0.0, 3.0, 6.0]);
        let out = lte_forward(&frames, 2, &[constant_scorer(1)]).unwrap();
        assert_eq!(out, Matrix::from_row_slice(2, 1, &[1.5, 6.0]));
        assert!(lte_forward(&frames, 2, &[constant_scorer(1), constant_scorer(1), constant_scorer(1)]).is_err());
        assert!(lte_forward(&frames, 2, &[constant_scorer(2)]).is_err());
    }

    #[test]
    fn adjacency_closed_forms() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(1, 1)).unwrap(), Matrix::from_element(1, 1, 1.0));
        let a = normalize_adjacency(&chain_adjacency(3)).unwrap();
        let r = 1.0 / 6.0f64.sqrt();
        let expected = Matrix::from_row_slice(3, 3, &[0.5, r, 0.0, r, 1.0 / 3.0, r, 0.0, r, 0.5]);
        assert!((a.clone() - expected).amax() < 1e-15);
        assert!((a[(0, 1)] - 0.4082482904638631).abs() < 1e-15);
        assert_eq!(a, a.transpose());
        assert!(normalize_adjacency(&Matrix::from_element(2, 2, -1.0)).is_err());
    }

    #[test]
    fn gte_identity_is_gelu() {
        let x = Matrix::from_row_slice(2, 2, &[0.5, 1.0, 2.0, 0.0]);
        let out = gte_forward(&x, &Matrix::identity(2, 2), &Matrix::identity(2, 2)).unwrap();
        assert_eq!(out, x.map(gelu));
        assert!(gte_forward(&x, &Matrix::identity(3, 3), &Matrix::identity(2, 2)).is_err());
    }

    #[test]
    fn quantize_exact_and_ties() {
        let entries = Matrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let cb = Codebook::new(entries).unwrap();
        assert_eq!(vq_quantize(&cb.entry(7), &cb).unwrap().0, 7);
        let tie = Codebook::new(Matrix::from_row_slice(3, 1, &[5.0, -1.0, 1.0])).unwrap();
        assert_eq!(vq_quantize(&Vector::from_vec(vec![0.0]), &tie).unwrap().0, 1);
        assert!(vq_quantize(&Vector::zeros(3), &cb).is_err());
    }

    #[test]
    fn vq_loss_values() {
        let a = Matrix::from_element(2, 3, 0.25);
        let zero = vq_losses(&a, &a, &a, &a, 1.0).unwrap();
        assert_eq!((zero.rec, zero.app, zero.vq), (0.0, 0.0, 0.0));
        let b = a.add_scalar(1.0);
        let unit = vq_losses(&b, &a, &b, &a, 1.0).unwrap();
        assert_eq!((unit.rec, unit.app, unit.vq), (1.0, 1.0, 2.0));
        let half = vq_losses(&b, &a, &b, &a, 0.5).unwrap();
        assert_eq!(half.vq, half.rec + 0.5 * half.app);
    }
}
