//! Seeded property suite over the kernels, run by `party-eval kernels selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::oracle::{self, max_abs_diff, to_rows, to_vec, MhaWeights};
use super::*;
use crate::error::Result;

/// Cases per oracle comparison.
pub const CASES: u64 = 100;
/// Largest tolerated deviation from the loop oracles.
pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Case {
    rng: ChaCha8Rng,
    init: WeightInit,
}

impl Case {
    fn new(seed: u64, case: u64) -> Self {
        let s = seed.wrapping_mul(0x100_0000_01B3).wrapping_add(case);
        Case { rng: ChaCha8Rng::seed_from_u64(s), init: WeightInit::new(s ^ 0xA5A5_A5A5) }
    }

    fn size(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    fn normal(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            scale * z
        })
    }

    /// Weights scaled up so softmaxes are far from uniform.
    fn weights(&mut self, rows: usize, cols: usize) -> Matrix {
        self.init.matrix(rows, cols) * 10.0
    }

    fn mlp(&mut self, dims: &[usize]) -> DenseStack {
        let mut acts = vec![Activation::Relu; dims.len() - 2];
        acts.push(Activation::None);
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, act)| DenseLayer { w: self.weights(d[0], d[1]), b: self.init.vector(d[1]), act })
            .collect();
        DenseStack::new(layers).expect("chained dims")
    }

    fn hpf(&mut self, d: usize, heads: usize, head_dim: usize) -> HpfParams {
        let inner = heads * head_dim;
        let self_attn = AttentionParams::new(
            heads,
            head_dim,
            self.weights(d, inner),
            self.weights(d, inner),
            self.weights(d, inner),
            self.weights(inner, d),
        )
        .expect("shapes");
        HpfParams {
            self_attn,
            cross_query: self.weights(d, inner),
            cross_arms: KvProjection { w_k: self.weights(d, inner), w_v: self.weights(d, inner) },
            cross_legs: KvProjection { w_k: self.weights(d, inner), w_v: self.weights(d, inner) },
            cross_out: self.weights(inner, d),
            heads,
            head_dim,
            split_tokens: [self.init.vector(d) * 10.0, self.init.vector(d) * 10.0],
        }
    }
}

/// Runs `f` on `CASES` seeded cases and folds the worst deviation.
fn oracle_check(name: &'static str, seed: u64, f: impl Fn(&mut Case) -> Result<f64>) -> CheckResult {
    let mut worst: f64 = 0.0;
    for case in 0..CASES {
        match f(&mut Case::new(seed, case)) {
            Ok(e) if e.is_nan() => return fail(name, format!("case {case}: NaN deviation")),
            Ok(e) => worst = worst.max(e),
            Err(err) => return fail(name, format!("case {case}: {err}")),
        }
    }
    CheckResult { name, passed: worst <= ORACLE_TOL, detail: format!("max |diff| = {worst:.3e} over {CASES} cases") }
}

fn fail(name: &'static str, detail: String) -> CheckResult {
    CheckResult { name, passed: false, detail }
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult { name, passed, detail: detail.into() }
}

pub fn lte_oracle(seed: u64) -> CheckResult {
    oracle_check("lte_forward matches oracle", seed, |c| {
        let (t, d, w) = (c.size(1, 24), c.size(1, 8), c.size(1, 6));
        let frames = c.normal(t, d, 2.0);
        let hidden = c.size(1, 6);
        let mlps: Vec<DenseStack> = if c.rng.random_bool(0.5) {
            vec![c.mlp(&[d, hidden, hidden, 1])]
        } else {
            (0..t.div_ceil(w)).map(|_| c.mlp(&[d, hidden, 1])).collect()
        };
        let got = lte_forward(&frames, w, &mlps)?;
        Ok(max_abs_diff(&to_rows(&got), &oracle::lte(&to_rows(&frames), w, &mlps)))
    })
}

pub fn lte_convex_hull(seed: u64) -> CheckResult {
    let mut violations = 0;
    for case in 0..CASES {
        let mut c = Case::new(seed, case);
        let (t, d, w) = (c.size(1, 24), c.size(1, 6), c.size(1, 6));
        let frames = c.normal(t, d, 3.0);
        let mlp = c.mlp(&[d, 4, 1]);
        let Ok(out) = lte_forward(&frames, w, &[mlp]) else {
            return fail("lte output inside group hull", format!("case {case} errored"));
        };
        for g in 0..out.nrows() {
            let rows: Vec<usize> = (0..w).map(|j| (g * w + j).min(t - 1)).collect();
            for k in 0..d {
                let vals = rows.iter().map(|&r| frames[(r, k)]);
                let lo = vals.clone().fold(f64::INFINITY, f64::min);
                let hi = vals.fold(f64::NEG_INFINITY, f64::max);
                let v = out[(g, k)];
                if v < lo - 1e-12 || v > hi + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    check("lte output inside group hull", violations == 0, format!("{violations} violations"))
}

pub fn gte_oracle(seed: u64) -> CheckResult {
    oracle_check("gte_forward matches oracle", seed, |c| {
        let (n, d, d2) = (c.size(1, 12), c.size(1, 8), c.size(1, 8));
        let nodes = c.normal(n, d, 1.0);
        let a = if c.rng.random_bool(0.5) {
            normalize_adjacency(&chain_adjacency(n))?
        } else {
            normalize_adjacency(&c.normal(n, n, 1.0).map(f64::abs))?
        };
        let w = c.weights(d, d2);
        let got = gte_forward(&nodes, &a, &w)?;
        Ok(max_abs_diff(&to_rows(&got), &oracle::gte(&to_rows(&nodes), &to_rows(&a), &to_rows(&w))))
    })
}

pub fn vq_scan(seed: u64) -> CheckResult {
    let mut mismatches = 0;
    let mut total = 0;
    for case in 0..CASES {
        let mut c = Case::new(seed, case);
        let (size, d) = (c.size(1, 64), c.size(1, 16));
        // coarse grid values make exact ties common
        let entries = c.normal(size, d, 1.0).map(|v| (v * 2.0).round() / 2.0);
        let cb = Codebook::new(entries.clone()).expect("finite");
        let rows = to_rows(&entries);
        for _ in 0..20 {
            let feat = c.normal(d, 1, 1.0).map(|v| (v * 2.0).round() / 2.0);
            total += 1;
            match vq_quantize(&Vector::from_column_slice(feat.as_slice()), &cb) {
                Ok((i, e)) if i == oracle::quantize(feat.as_slice(), &rows) && e == cb.entry(i) => {}
                _ => mismatches += 1,
            }
        }
    }
    check("vq_quantize matches exhaustive scan", mismatches == 0, format!("{mismatches}/{total} mismatches"))
}

pub fn gate_oracle(seed: u64) -> CheckResult {
    oracle_check("part_gate matches oracle", seed, |c| {
        let (k, d) = (c.size(1, 8), c.size(1, 10));
        let e = c.normal(k, d, 1.0);
        let gate = c.mlp(&[d, 1]);
        let (out, w) = part_gate(&e, &gate)?;
        let (o_out, o_w) = oracle::gate(&to_rows(&e), &gate);
        let sum_err = (w.iter().sum::<f64>() - 1.0).abs();
        Ok(max_abs_diff(&[to_vec(&out), w].to_vec(), &[o_out, o_w].to_vec()).max(sum_err))
    })
}

pub fn attention_oracle(seed: u64) -> CheckResult {
    oracle_check("scaled_dot_attention matches oracle", seed, |c| {
        let (nq, nk, dk, dv) = (c.size(1, 8), c.size(1, 8), c.size(1, 8), c.size(1, 8));
        let (q, k, v) = (c.normal(nq, dk, 2.0), c.normal(nk, dk, 2.0), c.normal(nk, dv, 1.0));
        let got = scaled_dot_attention(&q, &k, &v)?;
        let rows_err = attention_weights(&q, &k)?
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        Ok(max_abs_diff(&to_rows(&got), &oracle::attention(&to_rows(&q), &to_rows(&k), &to_rows(&v))).max(rows_err))
    })
}

pub fn multi_head_oracle(seed: u64) -> CheckResult {
    oracle_check("multi_head_attention matches oracle", seed, |c| {
        let (n, m, d, heads, hd) = (c.size(1, 6), c.size(1, 6), c.size(1, 8), c.size(1, 4), c.size(1, 4));
        let p = AttentionParams::new(
            heads,
            hd,
            c.weights(d, heads * hd),
            c.weights(d, heads * hd),
            c.weights(d, heads * hd),
            c.weights(heads * hd, d),
        )?;
        let (xq, xkv) = (c.normal(n, d, 1.0), c.normal(m, d, 1.0));
        let got = multi_head_attention(&xq, &xkv, &p)?;
        let (wq, wk, wv, wo) = (to_rows(p.w_q()), to_rows(p.w_k()), to_rows(p.w_v()), to_rows(p.w_o()));
        let w = MhaWeights { heads, head_dim: hd, w_q: &wq, w_k: &wk, w_v: &wv, w_o: &wo };
        Ok(max_abs_diff(&to_rows(&got), &oracle::multi_head(&to_rows(&xq), &to_rows(&xkv), &w)))
    })
}

pub fn hpf_oracle(seed: u64) -> CheckResult {
    oracle_check("hpf matches oracle", seed, |c| {
        let (n, d, heads, hd) = (c.size(1, 6), c.size(1, 8), c.size(1, 3), c.size(1, 4));
        let p = c.hpf(d, heads, hd);
        let (h, a, l) = (c.normal(n, d, 1.0), c.normal(n, d, 1.0), c.normal(n, d, 1.0));
        let got = hpf(&h, &a, &l, &p)?;
        Ok(max_abs_diff(&to_rows(&got), &oracle::hpf(&to_rows(&h), &to_rows(&a), &to_rows(&l), &p)))
    })
}

pub fn hpf_relabel(seed: u64) -> CheckResult {
    oracle_check("hpf invariant under part relabeling", seed, |c| {
        let (n, d, heads, hd) = (c.size(1, 6), c.size(1, 8), c.size(1, 3), c.size(1, 4));
        let p = c.hpf(d, heads, hd);
        let (h, a, l) = (c.normal(n, d, 1.0), c.normal(n, d, 1.0), c.normal(n, d, 1.0));
        let out = hpf(&h, &a, &l, &p)?;
        let swapped = hpf(&h, &l, &a, &p.swapped_parts())?;
        Ok((out - swapped).amax())
    })
}

pub fn fuse_oracle(seed: u64) -> CheckResult {
    oracle_check("fuse_guidance matches oracle", seed, |c| {
        let (t, d, hidden) = (c.size(1, 5), c.size(1, 8), c.size(1, 8));
        let mlp = c.mlp(&[d, hidden, d]);
        let (a, l) = (c.normal(t, d, 1.0), c.normal(t, d, 1.0));
        let got = fuse_guidance(&a, &l, &mlp)?;
        Ok(max_abs_diff(&vec![to_vec(&got)], &vec![oracle::fuse(&to_rows(&a), &to_rows(&l), &mlp)]))
    })
}

pub fn adjacency_closed_form() -> CheckResult {
    let r = 1.0 / 6.0f64.sqrt();
    let expected = Matrix::from_row_slice(3, 3, &[0.5, r, 0.0, r, 1.0 / 3.0, r, 0.0, r, 0.5]);
    match normalize_adjacency(&chain_adjacency(3)) {
        Ok(a) => {
            let err = (&a - expected).amax();
            let sym = (&a - a.transpose()).amax();
            check("normalized chain adjacency", err < 1e-15 && sym == 0.0, format!("max |diff| = {err:.3e}"))
        }
        Err(e) => fail("normalized chain adjacency", e.to_string()),
    }
}

pub fn diversity_closed_forms(seed: u64) -> CheckResult {
    let name = "diversity_loss closed forms";
    let mut c = Case::new(seed, 0);
    let mut worst: f64 = 0.0;
    for k in 1..=8 {
        let v = c.normal(16, 1, 1.0).column(0).into_owned();
        let tau = 0.01 + c.rng.random::<f64>();
        match diversity_loss(&v, &vec![v.clone(); k], tau) {
            Ok(l) => worst = worst.max((l - (k as f64).ln()).abs()),
            Err(e) => return fail(name, e.to_string()),
        }
    }
    let mut neg = Matrix::from_element(4, 4, -1.0);
    neg.fill_diagonal(1.0);
    let degenerate = match diversity_loss_from_similarities(&[1.0; 4], &neg, DIVERSITY_TAU) {
        Ok(l) => l,
        Err(e) => return fail(name, e.to_string()),
    };
    check(
        name,
        worst < 1e-12 && (0.0..1e-12).contains(&degenerate),
        format!("|L - ln K| <= {worst:.3e}; degenerate negatives {degenerate:.3e}"),
    )
}

/// Part hooks emit embeddings encoding their step; the holistic hook records
/// the guidance it was handed.
struct Probe {
    vocab: usize,
    dim: usize,
    scale: f64,
    end_at: Option<usize>,
    end_token: usize,
    seen: Vec<Option<Vector>>,
}

impl TokenGenerator for Probe {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_token(&mut self, input: &StepInput<'_>) -> Result<(usize, Vector)> {
        self.seen.push(input.guidance.cloned());
        if input.history_embeddings.nrows() != input.step - 1 {
            return Err(crate::Error::Contract("history length mismatch".into()));
        }
        if self.end_at == Some(input.step) {
            return Ok((self.end_token, Vector::zeros(self.dim)));
        }
        let e = Vector::from_fn(self.dim, |k, _| self.scale * (input.step as f64) + k as f64);
        Ok((input.step % self.end_token, e))
    }
}

fn probe(scale: f64, end_at: Option<usize>) -> Probe {
    Probe { vocab: 17, dim: 4, scale, end_at, end_token: 16, seen: Vec::new() }
}

/// Checks the guidance schedule of one run; returns a failure description.
pub fn audit_schedule(cfg: &CycleConfig, end_at: Option<usize>, seed: u64) -> std::result::Result<CycleOutput, String> {
    let mut init = WeightInit::new(seed);
    let mlp = DenseStack::random(&[4, 6, 4], &[Activation::Relu, Activation::None], &mut init).map_err(|e| e.to_string())?;
    let hpf_params = HpfParams::random(4, 2, 2, &mut init).map_err(|e| e.to_string())?;
    let inputs = CycleInputs { text: Vector::zeros(3), arm_text: Vector::zeros(3), leg_text: Vector::zeros(3) };
    let (mut arms, mut legs, mut hol) = (probe(1.0, None), probe(-0.5, None), probe(0.0, end_at));
    let out = generate_cycle(&mut arms, &mut legs, &mut hol, &inputs, cfg, &mlp, Some(&hpf_params)).map_err(|e| e.to_string())?;

    if out.guidance_log.len() != out.holistic.len() || hol.seen.len() != out.holistic.len() {
        return Err("guidance log length differs from holistic length".into());
    }
    for (t, (seen, used)) in hol.seen.iter().zip(&out.guidance_log).enumerate() {
        let step = t + 1;
        let cycle = step.div_ceil(cfg.t_cycle);
        if used.step != step || used.cycle != cycle {
            return Err(format!("step {step} logged cycle {}, expected {cycle}", used.cycle));
        }
        if seen.as_ref() != Some(&out.guidance[cycle - 1]) {
            return Err(format!("step {step} did not receive G_{cycle}"));
        }
        if used.part_tokens_available < cycle * cfg.t_cycle {
            return Err(format!("step {step} ran before its part tokens"));
        }
    }
    if arms.seen.iter().chain(&legs.seen).any(Option::is_some) {
        return Err("part generator received guidance".into());
    }
    // every holistic step is preceded by the fuse event of its cycle
    let mut fused = 0;
    for e in &out.events {
        match *e {
            CycleEvent::Fuse { cycle } => fused = cycle,
            CycleEvent::HolisticStep { cycle, .. } if cycle != fused => {
                return Err(format!("holistic step of cycle {cycle} ran after fuse {fused}"));
            }
            _ => {}
        }
    }
    Ok(out)
}

pub fn cycle_schedule(seed: u64) -> CheckResult {
    let name = "cycle schedule";
    let cfg = CycleConfig { t_cycle: 3, max_len: 7, end_token: 16 };
    let out = match audit_schedule(&cfg, None, seed) {
        Ok(o) => o,
        Err(e) => return fail(name, e),
    };
    let ended = match audit_schedule(&cfg, Some(1), seed) {
        Ok(o) => o,
        Err(e) => return fail(name, e),
    };
    let rerun = audit_schedule(&cfg, None, seed).ok();
    let ok = out.holistic.len() == 7
        && out.arms.len() == 9
        && out.legs.len() == 9
        && ended.holistic.len() == 1
        && ended.arms.len() == 3
        && ended.ended_by_token
        && rerun.as_ref() == Some(&out);
    check(
        name,
        ok,
        format!(
            "max_len 7: {} holistic, {}/{} part tokens; immediate end: {} holistic, {} part tokens",
            out.holistic.len(),
            out.arms.len(),
            out.legs.len(),
            ended.holistic.len(),
            ended.arms.len()
        ),
    )
}

pub fn nll_closed_forms() -> CheckResult {
    let uniform = nll_loss(&[0.25; 4], 0).unwrap_or(f64::NAN);
    let hit = nll_loss(&[0.0, 1.0, 0.0], 1).unwrap_or(f64::NAN);
    let miss = nll_loss(&[0.0, 1.0, 0.0], 0).unwrap_or(f64::NAN);
    let ok = (uniform - 4f64.ln()).abs() < 1e-15 && hit == 0.0 && (miss + PROB_FLOOR.ln()).abs() < 1e-12;
    check("nll_loss closed forms", ok, format!("uniform {uniform}, hit {hit}, miss {miss}"))
}

pub fn weights_round_trip(seed: u64) -> CheckResult {
    let mut c = Case::new(seed, 0);
    let files = [
        WeightsFile::DenseStack(c.mlp(&[3, 5, 2])),
        WeightsFile::Codebook(Codebook::new(c.normal(8, 4, 1.0)).expect("finite")),
        WeightsFile::Attention(AttentionParams::random(4, 2, 3, &mut c.init).expect("shapes")),
    ];
    let ok = files.iter().all(|f| WeightsFile::from_json(&f.to_json_string()).is_ok_and(|g| &g == f));
    check("weights JSON round trip", ok, "dense_stack, codebook, attention")
}

pub fn run(seed: u64) -> Vec<CheckResult> {
    vec![
        lte_oracle(seed),
        lte_convex_hull(seed),
        gte_oracle(seed),
        adjacency_closed_form(),
        vq_scan(seed),
        gate_oracle(seed),
        attention_oracle(seed),
        multi_head_oracle(seed),
        hpf_oracle(seed),
        hpf_relabel(seed),
        fuse_oracle(seed),
        diversity_closed_forms(seed),
        cycle_schedule(seed),
        nll_closed_forms(),
        weights_round_trip(seed),
    ]
}
