//! Naive loop implementations of the kernels over nested `Vec`s.
//!
//! These share no code with the matrix implementations beyond the scalar
//! activation functions, and exist to cross-check them.

use super::layers::{gelu, Activation, DenseStack};
use super::{Matrix, Vector};

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn matmul(a: &Rows, b: &Rows) -> Rows {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut acc = 0.0;
                    for k in 0..inner {
                        acc += row[k] * b[k][j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    let mut e = Vec::with_capacity(xs.len());
    let mut s = 0.0;
    for &x in xs {
        let v = (x - m).exp();
        s += v;
        e.push(v);
    }
    e.into_iter().map(|v| v / s).collect()
}

pub fn dense(stack: &DenseStack, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for layer in stack.layers() {
        let mut next = vec![0.0; layer.w.ncols()];
        for (j, out) in next.iter_mut().enumerate() {
            let mut acc = layer.b[j];
            for (i, hi) in h.iter().enumerate() {
                acc += hi * layer.w[(i, j)];
            }
            *out = match layer.act {
                Activation::Relu => {
                    if acc > 0.0 {
                        acc
                    } else {
                        0.0
                    }
                }
                Activation::Gelu => gelu(acc),
                Activation::None => acc,
            };
        }
        h = next;
    }
    h
}

pub fn lte(frames: &Rows, window: usize, mlps: &[DenseStack]) -> Rows {
    let t = frames.len();
    let d = frames[0].len();
    let groups = t.div_ceil(window);
    let mut out = Vec::new();
    for g in 0..groups {
        let members: Vec<&Vec<f64>> = (0..window).map(|j| &frames[(g * window + j).min(t - 1)]).collect();
        let mlp = if mlps.len() == 1 { &mlps[0] } else { &mlps[g] };
        let scores: Vec<f64> = members.iter().map(|f| dense(mlp, f)[0]).collect();
        let alpha = softmax(&scores);
        let mut acc = vec![0.0; d];
        for (a, f) in alpha.iter().zip(&members) {
            for k in 0..d {
                acc[k] += a * f[k];
            }
        }
        out.push(acc);
    }
    out
}

pub fn gte(nodes: &Rows, adjacency: &Rows, w: &Rows) -> Rows {
    let projected = matmul(nodes, w);
    matmul(adjacency, &projected)
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect()
}

pub fn quantize(feat: &[f64], entries: &Rows) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, e) in entries.iter().enumerate() {
        let mut d = 0.0;
        for k in 0..feat.len() {
            d += (feat[k] - e[k]).powi(2);
        }
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub fn gate(embeddings: &Rows, gate: &DenseStack) -> (Vec<f64>, Vec<f64>) {
    let logits: Vec<f64> = embeddings.iter().map(|e| dense(gate, e)[0]).collect();
    let w = softmax(&logits);
    let d = embeddings[0].len();
    let mut out = vec![0.0; d];
    for (wi, e) in w.iter().zip(embeddings) {
        for k in 0..d {
            out[k] += wi * e[k];
        }
    }
    (out, w)
}

pub fn attention(q: &Rows, k: &Rows, v: &Rows) -> Rows {
    let dk = q[0].len() as f64;
    q.iter()
        .map(|qi| {
            let logits: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / dk.sqrt())
                .collect();
            let w = softmax(&logits);
            let mut out = vec![0.0; v[0].len()];
            for (wj, vj) in w.iter().zip(v) {
                for c in 0..out.len() {
                    out[c] += wj * vj[c];
                }
            }
            out
        })
        .collect()
}

fn columns(m: &Rows, start: usize, len: usize) -> Rows {
    m.iter().map(|r| r[start..start + len].to_vec()).collect()
}

fn heads_attention(q: &Rows, k: &Rows, v: &Rows, heads: usize, head_dim: usize) -> Rows {
    let mut out: Rows = vec![Vec::new(); q.len()];
    for h in 0..heads {
        let o = attention(
            &columns(q, h * head_dim, head_dim),
            &columns(k, h * head_dim, head_dim),
            &columns(v, h * head_dim, head_dim),
        );
        for (row, part) in out.iter_mut().zip(o) {
            row.extend(part);
        }
    }
    out
}

pub struct MhaWeights<'a> {
    pub heads: usize,
    pub head_dim: usize,
    pub w_q: &'a Rows,
    pub w_k: &'a Rows,
    pub w_v: &'a Rows,
    pub w_o: &'a Rows,
}

pub fn multi_head(x_q: &Rows, x_kv: &Rows, w: &MhaWeights<'_>) -> Rows {
    let o = heads_attention(
        &matmul(x_q, w.w_q),
        &matmul(x_kv, w.w_k),
        &matmul(x_kv, w.w_v),
        w.heads,
        w.head_dim,
    );
    matmul(&o, w.w_o)
}

pub fn hpf(z_hol: &Rows, z_arms: &Rows, z_legs: &Rows, p: &super::HpfParams) -> Rows {
    let n = z_hol.len();
    let mut joint = z_hol.clone();
    joint.push(to_vec(&p.split_tokens[0]));
    joint.extend(z_arms.iter().cloned());
    joint.push(to_vec(&p.split_tokens[1]));
    joint.extend(z_legs.iter().cloned());

    let (wq, wk, wv, wo) = (
        to_rows(p.self_attn.w_q()),
        to_rows(p.self_attn.w_k()),
        to_rows(p.self_attn.w_v()),
        to_rows(p.self_attn.w_o()),
    );
    let mha = MhaWeights { heads: p.heads, head_dim: p.head_dim, w_q: &wq, w_k: &wk, w_v: &wv, w_o: &wo };
    let attended = multi_head(&joint, &joint, &mha);
    let hol = attended[0..n].to_vec();
    let arms = attended[n + 1..2 * n + 1].to_vec();
    let legs = attended[2 * n + 2..3 * n + 2].to_vec();

    let q = matmul(&hol, &to_rows(&p.cross_query));
    let ca = heads_attention(
        &q,
        &matmul(&arms, &to_rows(&p.cross_arms.w_k)),
        &matmul(&arms, &to_rows(&p.cross_arms.w_v)),
        p.heads,
        p.head_dim,
    );
    let cl = heads_attention(
        &q,
        &matmul(&legs, &to_rows(&p.cross_legs.w_k)),
        &matmul(&legs, &to_rows(&p.cross_legs.w_v)),
        p.heads,
        p.head_dim,
    );
    let summed: Rows = ca
        .iter()
        .zip(&cl)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    matmul(&summed, &to_rows(&p.cross_out))
}

pub fn fuse(arms: &Rows, legs: &Rows, mlp: &DenseStack) -> Vec<f64> {
    let mut g = vec![0.0; mlp.output_dim()];
    for (a, l) in arms.iter().zip(legs) {
        let s: Vec<f64> = a.iter().zip(l).map(|(x, y)| x + y).collect();
        for (gk, v) in g.iter_mut().zip(dense(mlp, &s)) {
            *gk += v;
        }
    }
    g
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &Rows, b: &Rows) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut m: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return f64::INFINITY;
        }
        for (p, q) in x.iter().zip(y) {
            m = m.max((p - q).abs());
        }
    }
    m
}
