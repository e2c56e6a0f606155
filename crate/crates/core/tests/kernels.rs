use party_eval_core::kernels::oracle;
use party_eval_core::kernels::selftest::{self, audit_schedule};
use party_eval_core::kernels::*;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, seed: u64, scale: f64) -> Matrix {
    WeightInit::new(seed).matrix(rows, cols) * scale
}

#[test]
fn selftest_passes_for_several_seeds() {
    for seed in [0, 1, 42, 2024] {
        for r in selftest::run(seed) {
            assert!(r.passed, "seed {seed}: {} failed: {}", r.name, r.detail);
        }
    }
}

#[test]
fn diversity_loss_identical_transforms() {
    let c = Vector::from_vec(vec![0.3, -1.0, 2.0]);
    let loss = diversity_loss(&c, &vec![c.clone(); 4], DIVERSITY_TAU).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn diversity_loss_degenerate_negatives() {
    let mut neg = Matrix::from_element(4, 4, -1.0);
    neg.fill_diagonal(0.0);
    let loss = diversity_loss_from_similarities(&[1.0; 4], &neg, DIVERSITY_TAU).unwrap();
    assert!(loss < 1e-12);
    assert!((loss - (3.0 * (-40f64).exp()).ln_1p()).abs() < 1e-28);
}

#[test]
fn gelu_reference_values() {
    assert_eq!(gelu(0.0), 0.0);
    assert!((gelu(1.0) - 0.8413447460685429).abs() < 1e-15);
    assert!((gelu(-1.0) + 0.15865525393145707).abs() < 1e-15);
}

#[test]
fn chain_adjacency_closed_form() {
    let a = normalize_adjacency(&chain_adjacency(3)).unwrap();
    let (h, t) = (1.0 / 6f64.sqrt(), 1.0 / 3.0);
    let want = Matrix::from_row_slice(3, 3, &[0.5, h, 0.0, h, t, h, 0.0, h, 0.5]);
    assert!((a - want).amax() < 1e-15);
}

#[test]
fn vq_losses_closed_form() {
    let decoded = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
    let target = Matrix::from_row_slice(1, 2, &[0.0, 4.0]);
    let q = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let e = Matrix::from_row_slice(1, 2, &[0.0, 3.0]);
    let l = vq_losses(&decoded, &target, &q, &e, 0.02).unwrap();
    assert_eq!((l.rec, l.app), (1.5, 2.5));
    assert!((l.vq - 1.55).abs() < 1e-15);
}

#[test]
fn default_cycle_runs_to_max_len() {
    let out = audit_schedule(&CycleConfig::default(), None, 3).unwrap();
    assert_eq!(out.holistic.len(), 49);
    assert_eq!(out.arms.len(), 51);
    assert_eq!(out.guidance.len(), 17);
    assert!(!out.ended_by_token);
}

#[test]
fn weight_file_rejects_unknown_kind() {
    assert!(WeightsFile::from_json(r#"{"kind":"conv","layers":[]}"#).is_err());
    assert!(WeightsFile::from_json(r#"{"kind":"dense_stack","layers":[{"w":[[1.0]],"b":[0.0,1.0],"act":"relu"}]}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quantizer_picks_nearest(seed in any::<u64>(), size in 1usize..40, dim in 1usize..8) {
        let book = Codebook::new(matrix(size, dim, seed, 5.0)).unwrap();
        let feat = WeightInit::new(seed ^ 1).vector(dim) * 5.0;
        let (idx, q) = vq_quantize(&feat, &book).unwrap();
        let best = (0..size).map(|i| (book.entry(i) - &feat).norm_squared()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!((book.entry(idx) - &feat).norm_squared(), best);
        prop_assert_eq!(q, book.entry(idx));
        let rows = oracle::to_rows(book.entries());
        prop_assert_eq!(idx, oracle::quantize(&oracle::to_vec(&feat), &rows));
    }

    #[test]
    fn lte_stays_in_group_hull(seed in any::<u64>(), t in 1usize..30, d in 1usize..6, window in 1usize..6) {
        let frames = matrix(t, d, seed, 3.0);
        let mut init = WeightInit::new(seed ^ 7);
        let mlp = DenseStack::random(&[d, 4, 1], &[Activation::Gelu, Activation::None], &mut init).unwrap();
        let out = lte_forward(&frames, window, std::slice::from_ref(&mlp)).unwrap();
        prop_assert_eq!(out.nrows(), t.div_ceil(window));
        for g in 0..out.nrows() {
            let rows: Vec<usize> = (g * window..((g + 1) * window).min(t)).collect();
            for k in 0..d {
                let lo = rows.iter().map(|&r| frames[(r, k)]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|&r| frames[(r, k)]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[(g, k)] >= lo - 1e-12 && out[(g, k)] <= hi + 1e-12);
            }
        }
        let want = oracle::lte(&oracle::to_rows(&frames), window, std::slice::from_ref(&mlp));
        prop_assert!(oracle::max_abs_diff(&oracle::to_rows(&out), &want) < 1e-10);
    }

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), nq in 1usize..8, nk in 1usize..8, d in 1usize..6) {
        let w = attention_weights(&matrix(nq, d, seed, 10.0), &matrix(nk, d, seed ^ 3, 10.0)).unwrap();
        for row in w.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn gate_weights_sum_to_one(seed in any::<u64>(), k in 1usize..6, d in 1usize..6) {
        let emb = matrix(k, d, seed, 4.0);
        let gate = DenseStack::random(&[d, 1], &[Activation::None], &mut WeightInit::new(seed ^ 5)).unwrap();
        let (out, w) = part_gate(&emb, &gate).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (want, ww) = oracle::gate(&oracle::to_rows(&emb), &gate);
        prop_assert!(oracle::max_abs_diff(&[oracle::to_vec(&out)].to_vec(), &[want].to_vec()) < 1e-10);
        prop_assert!(oracle::max_abs_diff(&[w].to_vec(), &[ww].to_vec()) < 1e-12);
    }

    #[test]
    fn hpf_matches_oracle(seed in any::<u64>(), n in 1usize..5, heads in 1usize..3, hd in 1usize..4) {
        let d = 4;
        let mut init = WeightInit::new(seed);
        let params = HpfParams::random(d, heads, hd, &mut init).unwrap();
        let (h, a, l) = (matrix(n, d, seed ^ 1, 2.0), matrix(n, d, seed ^ 2, 2.0), matrix(n, d, seed ^ 3, 2.0));
        let got = hpf(&h, &a, &l, &params).unwrap();
        prop_assert_eq!(got.shape(), (n, d));
        let want = oracle::hpf(&oracle::to_rows(&h), &oracle::to_rows(&a), &oracle::to_rows(&l), &params);
        prop_assert!(oracle::max_abs_diff(&oracle::to_rows(&got), &want) < 1e-10);
    }

    #[test]
    fn schedule_holds_for_any_config(seed in any::<u64>(), t_cycle in 1usize..6, max_len in 1usize..30, end in prop::option::of(1usize..30)) {
        let cfg = CycleConfig { t_cycle, max_len, end_token: 16 };
        let out = audit_schedule(&cfg, end, seed).map_err(TestCaseError::fail)?;
        let expected = end.map_or(max_len, |e| e.min(max_len));
        prop_assert_eq!(out.holistic.len(), expected);
        prop_assert_eq!(out.arms.len(), expected.div_ceil(t_cycle) * t_cycle);
        prop_assert_eq!(out.ended_by_token, end.is_some_and(|e| e <= max_len));
    }

    #[test]
    fn nll_is_nonnegative(logits in prop::collection::vec(-20.0f64..20.0, 1..20), pick in any::<prop::sample::Index>()) {
        let dist = softmax(&logits);
        let token = pick.index(dist.len());
        let v = nll_loss(&dist, token).unwrap();
        prop_assert!(v >= 0.0 && v <= -PROB_FLOOR.ln() + 1e-9);
    }
}
