//! Scaled dot-product attention and holistic-part fusion (HPF).

use super::layers::{softmax, WeightInit};
use super::{Matrix, Vector};
use crate::error::{Error, Result};

pub const DEFAULT_HEADS: usize = 6;
pub const DEFAULT_HEAD_DIM: usize = 64;

/// Row-wise `softmax(Q K^T / sqrt(d_k))`.
pub fn attention_weights(q: &Matrix, k: &Matrix) -> Result<Matrix> {
    if q.ncols() != k.ncols() {
        return Err(Error::dims("attention key width", q.ncols(), k.ncols()));
    }
    if k.nrows() == 0 {
        return Err(Error::validation("attention over zero keys"));
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let logits = q * k.transpose() * scale;
    let mut out = Matrix::zeros(q.nrows(), k.nrows());
    for (i, row) in logits.row_iter().enumerate() {
        let logits: Vec<f64> = row.iter().copied().collect();
        for (j, w) in softmax(&logits).into_iter().enumerate() {
            out[(i, j)] = w;
        }
    }
    Ok(out)
}

pub fn scaled_dot_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    if k.nrows() != v.nrows() {
        return Err(Error::dims("attention values", k.nrows(), v.nrows()));
    }
    Ok(attention_weights(q, k)? * v)
}

/// Head-wise attention over already projected `q`, `k`, `v` (`heads * head_dim`
/// columns each); head outputs are concatenated.
fn split_heads_attention(q: &Matrix, k: &Matrix, v: &Matrix, heads: usize, head_dim: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(q.nrows(), heads * head_dim);
    for h in 0..heads {
        let cols = h * head_dim;
        let o = scaled_dot_attention(
            &q.columns(cols, head_dim).into_owned(),
            &k.columns(cols, head_dim).into_owned(),
            &v.columns(cols, head_dim).into_owned(),
        )?;
        out.columns_mut(cols, head_dim).copy_from(&o);
    }
    Ok(out)
}

/// Projections of one multi-head attention block. `w_q`, `w_k`, `w_v` are
/// `d_model x (heads * head_dim)`, `w_o` maps back to `d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    heads: usize,
    head_dim: usize,
    w_q: Matrix,
    w_k: Matrix,
    w_v: Matrix,
    w_o: Matrix,
}

impl AttentionParams {
    pub fn new(heads: usize, head_dim: usize, w_q: Matrix, w_k: Matrix, w_v: Matrix, w_o: Matrix) -> Result<Self> {
        if heads == 0 || head_dim == 0 {
            return Err(Error::validation("heads and head_dim must be positive"));
        }
        let inner = heads * head_dim;
        let d = w_q.nrows();
        for (name, m) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            if m.shape() != (d, inner) {
                return Err(Error::dims(format!("{name} columns"), inner, m.ncols()));
            }
        }
        if w_o.shape() != (inner, d) {
            return Err(Error::dims("w_o rows", inner, w_o.nrows()));
        }
        if [&w_q, &w_k, &w_v, &w_o].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::validation("attention weights must be finite"));
        }
        Ok(AttentionParams { heads, head_dim, w_q, w_k, w_v, w_o })
    }

    pub fn random(d_model: usize, heads: usize, head_dim: usize, init: &mut WeightInit) -> Result<Self> {
        let inner = heads * head_dim;
        let w_q = init.matrix(d_model, inner);
        let w_k = init.matrix(d_model, inner);
        let w_v = init.matrix(d_model, inner);
        let w_o = init.matrix(inner, d_model);
        Self::new(heads, head_dim, w_q, w_k, w_v, w_o)
    }

    /// Identity projections; `d_model` must split evenly into `heads`.
    pub fn identity(d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::validation("d_model must be a multiple of heads"));
        }
        let i = Matrix::identity(d_model, d_model);
        Self::new(heads, d_model / heads, i.clone(), i.clone(), i.clone(), i)
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn d_model(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn w_q(&self) -> &Matrix {
        &self.w_q
    }

    pub fn w_k(&self) -> &Matrix {
        &self.w_k
    }

    pub fn w_v(&self) -> &Matrix {
        &self.w_v
    }

    pub fn w_o(&self) -> &Matrix {
        &self.w_o
    }
}

/// Multi-head attention of `x_q` rows over `x_kv` rows.
pub fn multi_head_attention(x_q: &Matrix, x_kv: &Matrix, p: &AttentionParams) -> Result<Matrix> {
    if x_q.ncols() != p.d_model() || x_kv.ncols() != p.d_model() {
        return Err(Error::dims("attention input width", p.d_model(), x_q.ncols().max(x_kv.ncols())));
    }
    let heads = split_heads_attention(&(x_q * &p.w_q), &(x_kv * &p.w_k), &(x_kv * &p.w_v), p.heads, p.head_dim)?;
    Ok(heads * &p.w_o)
}

/// Key/value projections of one part stream in the HPF cross-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct KvProjection {
    pub w_k: Matrix,
    pub w_v: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpfParams {
    pub self_attn: AttentionParams,
    /// `Q'` projection of the attended holistic stream.
    pub cross_query: Matrix,
    pub cross_arms: KvProjection,
    pub cross_legs: KvProjection,
    /// Maps the summed cross-attention output back to `d_model`.
    pub cross_out: Matrix,
    pub heads: usize,
    pub head_dim: usize,
    /// Separators placed after the holistic and after the arm stream.
    pub split_tokens: [Vector; 2],
}

impl HpfParams {
    pub fn random(d_model: usize, heads: usize, head_dim: usize, init: &mut WeightInit) -> Result<Self> {
        let inner = heads * head_dim;
        let p = HpfParams {
            self_attn: AttentionParams::random(d_model, heads, head_dim, init)?,
            cross_query: init.matrix(d_model, inner),
            cross_arms: KvProjection { w_k: init.matrix(d_model, inner), w_v: init.matrix(d_model, inner) },
            cross_legs: KvProjection { w_k: init.matrix(d_model, inner), w_v: init.matrix(d_model, inner) },
            cross_out: init.matrix(inner, d_model),
            heads,
            head_dim,
            split_tokens: [init.vector(d_model), init.vector(d_model)],
        };
        p.validate()?;
        Ok(p)
    }

    /// All projections identity, separators zero.
    pub fn identity(d_model: usize, heads: usize) -> Result<Self> {
        let self_attn = AttentionParams::identity(d_model, heads)?;
        let i = Matrix::identity(d_model, d_model);
        Ok(HpfParams {
            self_attn,
            cross_query: i.clone(),
            cross_arms: KvProjection { w_k: i.clone(), w_v: i.clone() },
            cross_legs: KvProjection { w_k: i.clone(), w_v: i.clone() },
            cross_out: i,
            heads,
            head_dim: d_model / heads,
            split_tokens: [Vector::zeros(d_model), Vector::zeros(d_model)],
        })
    }

    pub fn d_model(&self) -> usize {
        self.self_attn.d_model()
    }

    /// Same fusion with the arm and leg roles exchanged.
    pub fn swapped_parts(&self) -> Self {
        let mut p = self.clone();
        std::mem::swap(&mut p.cross_arms, &mut p.cross_legs);
        p
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d_model();
        let inner = self.heads * self.head_dim;
        if self.heads == 0 || self.head_dim == 0 {
            return Err(Error::validation("heads and head_dim must be positive"));
        }
        let checks = [
            ("cross_query", &self.cross_query, (d, inner)),
            ("cross_arms.w_k", &self.cross_arms.w_k, (d, inner)),
            ("cross_arms.w_v", &self.cross_arms.w_v, (d, inner)),
            ("cross_legs.w_k", &self.cross_legs.w_k, (d, inner)),
            ("cross_legs.w_v", &self.cross_legs.w_v, (d, inner)),
            ("cross_out", &self.cross_out, (inner, d)),
        ];
        for (name, m, shape) in checks {
            if m.shape() != shape {
                return Err(Error::dims(format!("hpf {name}"), shape.0 * shape.1, m.nrows() * m.ncols()));
            }
        }
        for s in &self.split_tokens {
            if s.len() != d {
                return Err(Error::dims("hpf split token", d, s.len()));
            }
        }
        Ok(())
    }
}

/// Refines the holistic history with the part streams.
///
/// Self-attention runs over `[z_hol; split; z_arms; split; z_legs]`; the result
/// is cut back into streams by their known lengths. The attended holistic
/// stream then queries each attended part stream, and the two cross-attention
/// outputs are summed.
pub fn hpf(z_hol: &Matrix, z_arms: &Matrix, z_legs: &Matrix, params: &HpfParams) -> Result<Matrix> {
    params.validate()?;
    let n = z_hol.nrows();
    let d = params.d_model();
    if n == 0 {
        return Err(Error::validation("hpf needs a non-empty history"));
    }
    for (name, z) in [("holistic", z_hol), ("arms", z_arms), ("legs", z_legs)] {
        if z.nrows() != n {
            return Err(Error::validation(format!("hpf {name} stream has {} tokens, expected {n}", z.nrows())));
        }
        if z.ncols() != d {
            return Err(Error::dims(format!("hpf {name} width"), d, z.ncols()));
        }
    }
    let mut joint = Matrix::zeros(3 * n + 2, d);
    joint.rows_mut(0, n).copy_from(z_hol);
    joint.row_mut(n).copy_from(&params.split_tokens[0].transpose());
    joint.rows_mut(n + 1, n).copy_from(z_arms);
    joint.row_mut(2 * n + 1).copy_from(&params.split_tokens[1].transpose());
    joint.rows_mut(2 * n + 2, n).copy_from(z_legs);

    let attended = multi_head_attention(&joint, &joint, &params.self_attn)?;
    let hol = attended.rows(0, n).into_owned();
    let arms = attended.rows(n + 1, n).into_owned();
    let legs = attended.rows(2 * n + 2, n).into_owned();

    let q = &hol * &params.cross_query;
    let cross = |z: &Matrix, kv: &KvProjection| {
        split_heads_attention(&q, &(z * &kv.w_k), &(z * &kv.w_v), params.heads, params.head_dim)
    };
    let summed = cross(&arms, &params.cross_arms)? + cross(&legs, &params.cross_legs)?;
    Ok(summed * &params.cross_out)
}
