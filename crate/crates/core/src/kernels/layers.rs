//! Dense layers, codebooks, weight files and the seeded initializer.

use serde::{Deserialize, Serialize};

use super::attention::AttentionParams;
use super::{Matrix, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
    None,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => gelu(x),
            Activation::None => x,
        }
    }
}

/// `x * Phi(x)` with the exact Gaussian CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in x out`.
    pub w: Matrix,
    pub b: Vector,
    pub act: Activation,
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStack {
    layers: Vec<DenseLayer>,
}

impl DenseStack {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation("dense stack has no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.w.ncols() != l.b.len() {
                return Err(Error::dims(format!("layer {i} bias"), l.w.ncols(), l.b.len()));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("layer {i} has non-finite weights")));
            }
            if i > 0 && layers[i - 1].w.ncols() != l.w.nrows() {
                return Err(Error::dims(format!("layer {i} input"), layers[i - 1].w.ncols(), l.w.nrows()));
            }
        }
        Ok(DenseStack { layers })
    }

    /// Layer widths `dims[0] -> dims[1] -> ...` with seeded uniform(-0.1, 0.1)
    /// weights.
    pub fn random(dims: &[usize], acts: &[Activation], init: &mut WeightInit) -> Result<Self> {
        if dims.len() < 2 || acts.len() != dims.len() - 1 {
            return Err(Error::validation("need one activation per layer and at least two widths"));
        }
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, &act)| DenseLayer { w: init.matrix(d[0], d[1]), b: init.vector(d[1]), act })
            .collect();
        Self::new(layers)
    }

    /// `x -> x`, for tests and ablations.
    pub fn identity(dim: usize) -> Self {
        DenseStack {
            layers: vec![DenseLayer { w: Matrix::identity(dim, dim), b: Vector::zeros(dim), act: Activation::None }],
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    /// Forward pass of every row of `x`.
    pub fn forward_rows(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("dense stack input", self.input_dim(), x.ncols()));
        }
        let mut h = x.clone();
        for l in &self.layers {
            h = &h * &l.w;
            for mut row in h.row_iter_mut() {
                for (v, b) in row.iter_mut().zip(l.b.iter()) {
                    *v = l.act.apply(*v + b);
                }
            }
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        let out = self.forward_rows(&Matrix::from_row_slice(1, x.len(), x.as_slice()))?;
        Ok(out.row(0).transpose())
    }
}

/// `C x d` table of code vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Matrix,
}

impl Codebook {
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::validation("codebook is empty"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("codebook has non-finite entries"));
        }
        Ok(Codebook { entries })
    }

    pub fn random(size: usize, dim: usize, init: &mut WeightInit) -> Result<Self> {
        Self::new(init.matrix(size, dim))
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entry(&self, i: usize) -> Vector {
        self.entries.row(i).transpose()
    }
}

/// Deterministic uniform(-0.1, 0.1) weights.
///
/// The stream is splitmix64 started at `seed`: each draw adds
/// `0x9E3779B97F4A7C15` to the state and mixes it; the top 53 bits give
/// `u in [0, 1)` and the weight is `-0.1 + 0.2 u`. Matrices fill row-major.
#[derive(Debug, Clone)]
pub struct WeightInit {
    state: u64,
}

impl WeightInit {
    pub fn new(seed: u64) -> Self {
        WeightInit { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        -0.1 + 0.2 * u
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data: Vec<f64> = (0..rows * cols).map(|_| self.uniform()).collect();
        Matrix::from_row_slice(rows, cols, &data)
    }

    pub fn vector(&mut self, n: usize) -> Vector {
        Vector::from_iterator(n, (0..n).map(|_| self.uniform()))
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], context: &str) -> Result<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Error::validation(format!("{context}: empty matrix")));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::dims(format!("{context} row"), cols, r.len()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), cols, &flat))
}

pub(crate) fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawWeights {
    DenseStack {
        layers: Vec<LayerFile>,
    },
    Codebook {
        entries: Vec<Vec<f64>>,
    },
    Attention {
        heads: usize,
        head_dim: usize,
        w_q: Vec<Vec<f64>>,
        w_k: Vec<Vec<f64>>,
        w_v: Vec<Vec<f64>>,
        w_o: Vec<Vec<f64>>,
    },
}

/// Contents of a weights JSON file, tagged by `"kind"`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightsFile {
    DenseStack(DenseStack),
    Codebook(Codebook),
    Attention(AttentionParams),
}

impl WeightsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawWeights = serde_json::from_str(text)?;
        Ok(match raw {
            RawWeights::DenseStack { layers } => WeightsFile::DenseStack(DenseStack::new(
                layers
                    .into_iter()
                    .enumerate()
                    .map(|(i, l)| {
                        Ok(DenseLayer {
                            w: matrix_from_rows(&l.w, &format!("layer {i} w"))?,
                            b: Vector::from_vec(l.b),
                            act: l.act,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            )?),
            RawWeights::Codebook { entries } => {
                WeightsFile::Codebook(Codebook::new(matrix_from_rows(&entries, "codebook")?)?)
            }
            RawWeights::Attention { heads, head_dim, w_q, w_k, w_v, w_o } => {
                WeightsFile::Attention(AttentionParams::new(
                    heads,
                    head_dim,
                    matrix_from_rows(&w_q, "w_q")?,
                    matrix_from_rows(&w_k, "w_k")?,
                    matrix_from_rows(&w_v, "w_v")?,
                    matrix_from_rows(&w_o, "w_o")?,
                )?)
            }
        })
    }

    pub fn to_json_string(&self) -> String {
        let raw = match self {
            WeightsFile::DenseStack(s) => RawWeights::DenseStack {
                layers: s
                    .layers()
                    .iter()
                    .map(|l| LayerFile { w: matrix_to_rows(&l.w), b: l.b.iter().copied().collect(), act: l.act })
                    .collect(),
            },
            WeightsFile::Codebook(c) => RawWeights::Codebook { entries: matrix_to_rows(c.entries()) },
            WeightsFile::Attention(a) => RawWeights::Attention {
                heads: a.heads(),
                head_dim: a.head_dim(),
                w_q: matrix_to_rows(a.w_q()),
                w_k: matrix_to_rows(a.w_k()),
                w_v: matrix_to_rows(a.w_v()),
                w_o: matrix_to_rows(a.w_o()),
            },
        };
        serde_json::to_string(&raw).expect("finite weights serialize")
    }
}
