//! Part guidance, the cyclic part-then-holistic generation schedule and the
//! token losses.
//!
//! Generation runs in cycles. In cycle `i` each part generator emits
//! `t_cycle` tokens, the new arm and leg tokens are fused into guidance `G_i`,
//! and the holistic generator then emits up to `t_cycle` tokens conditioned on
//! `G_i` and on its own history refined by HPF. Holistic step `t` (1-based)
//! therefore always sees guidance `ceil(t / t_cycle)`. Generation stops after
//! the holistic end token or `max_len` holistic tokens.

use serde::Serialize;

use super::attention::{hpf, HpfParams};
use super::layers::DenseStack;
use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Smallest probability `nll_loss` will take the log of.
pub const PROB_FLOOR: f64 = 1e-12;

/// `sum_t MLP(arm_t + leg_t)` over the cycle's part tokens (rows).
pub fn fuse_guidance(arm_tokens: &Matrix, leg_tokens: &Matrix, fusion_mlp: &DenseStack) -> Result<Vector> {
    if arm_tokens.shape() != leg_tokens.shape() {
        return Err(Error::dims("guidance part tokens", arm_tokens.nrows(), leg_tokens.nrows()));
    }
    if arm_tokens.nrows() == 0 {
        return Err(Error::validation("guidance needs at least one part token"));
    }
    let fused = fusion_mlp.forward_rows(&(arm_tokens + leg_tokens))?;
    Ok(fused.row_sum().transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CycleConfig {
    /// Part steps per cycle, and holistic steps sharing one guidance vector.
    pub t_cycle: usize,
    /// Maximum number of holistic tokens.
    pub max_len: usize,
    pub end_token: usize,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig { t_cycle: 3, max_len: 49, end_token: 256 }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_cycle == 0 || self.max_len == 0 {
            return Err(Error::validation("t_cycle and max_len must be at least 1"));
        }
        Ok(())
    }
}

/// What a generator sees when asked for the token at `step` (1-based).
pub struct StepInput<'a> {
    pub step: usize,
    pub history: &'a [usize],
    /// Embeddings of the previous `step - 1` tokens, one per row. For the
    /// holistic generator these are the HPF-refined embeddings.
    pub history_embeddings: &'a Matrix,
    pub conditioning: &'a Vector,
    /// Current part guidance; `None` for part generators.
    pub guidance: Option<&'a Vector>,
}

/// Next-token function standing in for a trained autoregressive transformer.
pub trait TokenGenerator {
    /// Valid token ids are `0..vocab_size()`.
    fn vocab_size(&self) -> usize;
    fn next_token(&mut self, input: &StepInput<'_>) -> Result<(usize, Vector)>;
}

/// Text conditioning: the raw embedding for the holistic generator and the
/// grounded per-part embeddings.
#[derive(Debug, Clone)]
pub struct CycleInputs {
    pub text: Vector,
    pub arm_text: Vector,
    pub leg_text: Vector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CycleEvent {
    PartStep { part: &'static str, step: usize },
    Fuse { cycle: usize },
    HolisticStep { step: usize, cycle: usize },
}

/// Which guidance conditioned a holistic step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GuidanceUse {
    pub step: usize,
    /// 1-based cycle index of the guidance vector.
    pub cycle: usize,
    /// Part tokens per part that existed when the step ran.
    pub part_tokens_available: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutput {
    pub holistic: Vec<usize>,
    pub arms: Vec<usize>,
    pub legs: Vec<usize>,
    /// `G_1, G_2, ...`.
    pub guidance: Vec<Vector>,
    pub guidance_log: Vec<GuidanceUse>,
    pub events: Vec<CycleEvent>,
    pub ended_by_token: bool,
}

fn stack_rows(rows: &[Vector], dim: usize) -> Matrix {
    Matrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}

struct Stream {
    tokens: Vec<usize>,
    embeddings: Vec<Vector>,
}

impl Stream {
    fn new() -> Self {
        Stream { tokens: Vec::new(), embeddings: Vec::new() }
    }
}

fn checked_step(
    gen: &mut dyn TokenGenerator,
    name: &str,
    input: &StepInput<'_>,
    dim: usize,
) -> Result<(usize, Vector)> {
    let (token, emb) = gen.next_token(input)?;
    if token >= gen.vocab_size() {
        return Err(Error::Contract(format!(
            "{name} generator returned token {token} outside vocabulary of {}",
            gen.vocab_size()
        )));
    }
    if emb.len() != dim {
        return Err(Error::Contract(format!(
            "{name} generator returned a {}-dim embedding, expected {dim}",
            emb.len()
        )));
    }
    if emb.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("{name} generator returned a non-finite embedding")));
    }
    Ok((token, emb))
}

fn part_step(gen: &mut dyn TokenGenerator, name: &'static str, stream: &mut Stream, text: &Vector, dim: usize) -> Result<usize> {
    let history = stack_rows(&stream.embeddings, dim);
    let step = stream.tokens.len() + 1;
    let input = StepInput { step, history: &stream.tokens, history_embeddings: &history, conditioning: text, guidance: None };
    let (token, emb) = checked_step(gen, name, &input, dim)?;
    stream.tokens.push(token);
    stream.embeddings.push(emb);
    Ok(step)
}

/// Runs the part-guided schedule. Token embeddings must have the width of the
/// fusion MLP input (and of `hpf_params` when given; without it the holistic
/// history is passed unrefined).
pub fn generate_cycle(
    arms_gen: &mut dyn TokenGenerator,
    legs_gen: &mut dyn TokenGenerator,
    holistic_gen: &mut dyn TokenGenerator,
    inputs: &CycleInputs,
    cfg: &CycleConfig,
    fusion_mlp: &DenseStack,
    hpf_params: Option<&HpfParams>,
) -> Result<CycleOutput> {
    cfg.validate()?;
    let dim = fusion_mlp.input_dim();
    if fusion_mlp.output_dim() != dim {
        return Err(Error::dims("fusion MLP output", dim, fusion_mlp.output_dim()));
    }
    if let Some(p) = hpf_params {
        if p.d_model() != dim {
            return Err(Error::dims("hpf width", dim, p.d_model()));
        }
    }

    let (mut arms, mut legs, mut hol) = (Stream::new(), Stream::new(), Stream::new());
    let mut guidance = Vec::new();
    let mut guidance_log = Vec::new();
    let mut events = Vec::new();
    let mut ended_by_token = false;
    let mut cycle = 0;

    while hol.tokens.len() < cfg.max_len && !ended_by_token {
        cycle += 1;
        for _ in 0..cfg.t_cycle {
            let step = part_step(arms_gen, "arms", &mut arms, &inputs.arm_text, dim)?;
            events.push(CycleEvent::PartStep { part: "arms", step });
            let step = part_step(legs_gen, "legs", &mut legs, &inputs.leg_text, dim)?;
            events.push(CycleEvent::PartStep { part: "legs", step });
        }
        let start = arms.embeddings.len() - cfg.t_cycle;
        let g = fuse_guidance(
            &stack_rows(&arms.embeddings[start..], dim),
            &stack_rows(&legs.embeddings[start..], dim),
            fusion_mlp,
        )?;
        events.push(CycleEvent::Fuse { cycle });
        guidance.push(g);

        for _ in 0..cfg.t_cycle {
            if hol.tokens.len() == cfg.max_len {
                break;
            }
            let step = hol.tokens.len() + 1;
            let raw = stack_rows(&hol.embeddings, dim);
            let history = match hpf_params {
                Some(p) if step > 1 => {
                    let n = step - 1;
                    hpf(&raw, &stack_rows(&arms.embeddings[..n], dim), &stack_rows(&legs.embeddings[..n], dim), p)?
                }
                _ => raw,
            };
            let input = StepInput {
                step,
                history: &hol.tokens,
                history_embeddings: &history,
                conditioning: &inputs.text,
                guidance: guidance.last(),
            };
            let (token, emb) = checked_step(holistic_gen, "holistic", &input, dim)?;
            hol.tokens.push(token);
            hol.embeddings.push(emb);
            events.push(CycleEvent::HolisticStep { step, cycle });
            guidance_log.push(GuidanceUse { step, cycle, part_tokens_available: arms.tokens.len() });
            if token == cfg.end_token {
                ended_by_token = true;
                break;
            }
        }
    }

    Ok(CycleOutput {
        holistic: hol.tokens,
        arms: arms.tokens,
        legs: legs.tokens,
        guidance,
        guidance_log,
        events,
        ended_by_token,
    })
}

/// `-ln p(token)` with `p` floored at [`PROB_FLOOR`].
pub fn nll_loss(dist: &[f64], token: usize) -> Result<f64> {
    if token >= dist.len() {
        return Err(Error::validation(format!("token {token} outside distribution of {}", dist.len())));
    }
    if dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::validation("distribution entries must be finite and non-negative"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::validation(format!("distribution sums to {total}")));
    }
    Ok(0.0 - dist[token].max(PROB_FLOOR).ln())
}

/// Mean token NLL over a sequence.
pub fn sequence_nll(dists: &[Vec<f64>], tokens: &[usize]) -> Result<f64> {
    if dists.len() != tokens.len() || tokens.is_empty() {
        return Err(Error::dims("sequence nll", tokens.len(), dists.len()));
    }
    let mut total = 0.0;
    for (d, &t) in dists.iter().zip(tokens) {
        total += nll_loss(d, t)?;
    }
    Ok(total / tokens.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossWeights {
    pub lambda_div: f64,
    pub lambda_aux: f64,
    pub lambda_app: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_div: 0.1, lambda_aux: 0.1, lambda_app: 1.0 }
    }
}

/// Generator objective `L_hol + L_part + lambda_div L_div + lambda_aux L_aux`.
pub fn total_loss(hol: f64, part: f64, div: f64, aux: f64, w: &LossWeights) -> f64 {
    hol + part + w.lambda_div * div + w.lambda_aux * aux
}
