use nalgebra::DMatrix;
use party_eval_core::embedding::{EmbeddingRecord, EmbeddingSet};
use party_eval_core::metrics::{
    diversity, fid, matrix_sqrt_psd, mm_dist, multimodality, r_precision, r_precision_curve, repeated_eval, Metric,
    POOL_SIZE,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Closed form for the diagonal Gaussians below (tests/oracles/closed_forms.py).
const FID_CLOSED_FORM: f64 = 3.5931457505076194;

fn gaussian(mean: &[f64], var: &[f64], n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            mean.iter()
                .zip(var)
                .map(|(m, v)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + v.sqrt() * z
                })
                .collect()
        })
        .collect()
}

fn random_rows(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    gaussian(&vec![0.0; d], &vec![1.0; d], n, rng)
}

fn set(rows: Vec<Vec<f64>>) -> EmbeddingSet {
    EmbeddingSet::from_vectors(rows).unwrap()
}

fn random_orthogonal(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    m.qr().q()
}

fn transform(rows: &[Vec<f64>], q: &DMatrix<f64>) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| (0..q.ncols()).map(|j| (0..r.len()).map(|i| r[i] * q[(i, j)]).sum()).collect())
        .collect()
}

#[test]
fn fid_matches_gaussian_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = gaussian(&[0.0, 1.0, -1.0, 2.0], &[1.0, 2.0, 0.5, 4.0], 10_000, &mut rng);
    let b = gaussian(&[1.0, 0.5, 0.0, 2.0], &[2.0, 1.0, 0.5, 1.0], 10_000, &mut rng);
    let value = fid(&set(a), &set(b)).unwrap();
    let rel = (value - FID_CLOSED_FORM).abs() / FID_CLOSED_FORM;
    assert!(rel < 0.05, "fid {value}, relative error {rel}");
}

#[test]
fn fid_identity_and_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for d in [1, 3, 8, 16] {
        let a = set(random_rows(200, d, &mut rng));
        let b = set(gaussian(&vec![0.5; d], &vec![2.0; d], 150, &mut rng));
        assert!(fid(&a, &a).unwrap() < 1e-8);
        let (ab, ba) = (fid(&a, &b).unwrap(), fid(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-10, "{ab} vs {ba}");
    }
}

#[test]
fn fid_of_mean_shift_is_squared_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_rows(500, 6, &mut rng);
    let v = [1.0, -2.0, 0.5, 0.0, 3.0, -1.0];
    let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().zip(&v).map(|(x, s)| x + s).collect()).collect();
    let want: f64 = v.iter().map(|x| x * x).sum();
    assert!((fid(&set(a), &set(b)).unwrap() - want).abs() < 1e-6);
}

#[test]
fn fid_handles_rank_deficient_covariance() {
    // fewer samples than dimensions
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a = set(random_rows(5, 12, &mut rng));
    let b = set(random_rows(7, 12, &mut rng));
    let v = fid(&a, &b).unwrap();
    assert!(v.is_finite() && v >= 0.0);
}

#[test]
fn sqrt_reconstructs_psd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for case in 0..100 {
        let d = rng.random_range(1..=24);
        let rank = if case % 4 == 0 { rng.random_range(1..=d) } else { d };
        let b = DMatrix::<f64>::from_fn(d, rank, |_, _| StandardNormal.sample(&mut rng));
        let m = &b * b.transpose();
        let s = matrix_sqrt_psd(&m).unwrap();
        let err = (&s * &s - &m).norm() / m.norm();
        assert!(err < 1e-8, "case {case}: d={d} rank={rank} err={err}");
        assert!((&s - s.transpose()).amax() < 1e-10);
    }
}

#[test]
fn random_retrieval_hits_one_in_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let n = 1000;
    let text = random_rows(n, 8, &mut rng);
    let motion = random_rows(n, 8, &mut rng);
    let data = EmbeddingSet::from_pairs(text, motion).unwrap();
    let mean = (0..10).map(|s| r_precision(&data, 1, POOL_SIZE, s).unwrap()).sum::<f64>() / 10.0;
    assert!((mean - 1.0 / 32.0).abs() < 0.01, "{mean}");
}

#[test]
fn perfect_retrieval_scores_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let text = random_rows(64, 4, &mut rng);
    let data = EmbeddingSet::from_pairs(text.clone(), text).unwrap();
    assert_eq!(r_precision(&data, 1, POOL_SIZE, 0).unwrap(), 1.0);
    assert_eq!(mm_dist(&data).unwrap(), 0.0);
}

#[test]
fn retrieval_curve_is_monotone_and_order_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let text = random_rows(80, 5, &mut rng);
    let motion: Vec<Vec<f64>> = text
        .iter()
        .map(|t| t.iter().map(|x| x + 0.8 * rng.random::<f64>()).collect())
        .collect();
    let data = EmbeddingSet::from_pairs(text, motion).unwrap();
    let curve = r_precision_curve(&data, 5, POOL_SIZE, 3).unwrap();
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    let mut records = data.records().to_vec();
    records.shuffle(&mut rng);
    let shuffled = EmbeddingSet::new(records).unwrap();
    assert_eq!(r_precision_curve(&shuffled, 5, POOL_SIZE, 3).unwrap(), curve);
}

#[test]
fn mm_dist_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let text = random_rows(50, 7, &mut rng);
    let motion = random_rows(50, 7, &mut rng);
    let mut want = 0.0;
    for (t, m) in text.iter().zip(&motion) {
        want += t.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    }
    want /= 50.0;
    let got = mm_dist(&EmbeddingSet::from_pairs(text, motion).unwrap()).unwrap();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn diversity_of_two_balanced_clusters() {
    let rows: Vec<Vec<f64>> = (0..1000).map(|i| vec![if i % 2 == 0 { 0.0 } else { 4.0 }, 0.0]).collect();
    let data = set(rows);
    let mean = (0..100).map(|s| diversity(&data, 300, s).unwrap()).sum::<f64>() / 100.0;
    // a disjoint pair straddles the clusters with probability 500/999
    assert!((mean - 4.0 * 500.0 / 999.0).abs() < 0.05, "{mean}");
}

#[test]
fn diversity_ignores_record_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let data = set(random_rows(400, 3, &mut rng));
    let mut records = data.records().to_vec();
    records.reverse();
    let reordered = EmbeddingSet::new(records).unwrap();
    assert_eq!(diversity(&data, 300, 9).unwrap(), diversity(&reordered, 300, 9).unwrap());
}

#[test]
fn multimodality_on_two_member_groups() {
    // every sampled pair in a two-member group is the same pair
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut records = Vec::new();
    let mut want = 0.0;
    for g in 0..6 {
        let a = random_rows(1, 3, &mut rng).remove(0);
        let b = random_rows(1, 3, &mut rng).remove(0);
        want += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for (k, v) in [a, b].into_iter().enumerate() {
            records.push(EmbeddingRecord {
                id: format!("g{g}-{k}"),
                vector: v,
                text_vec: None,
                motion_vec: None,
                group_key: Some(format!("g{g}")),
            });
        }
    }
    records.push(EmbeddingRecord {
        id: "lonely".into(),
        vector: vec![100.0; 3],
        text_vec: None,
        motion_vec: None,
        group_key: Some("solo".into()),
    });
    let data = EmbeddingSet::new(records).unwrap();
    let got = multimodality(&data, 10, 4).unwrap();
    assert!((got - want / 6.0).abs() < 1e-12);
    let run = repeated_eval(&Metric::MultiModality { pairs_per_group: 10 }, &data, None, 3, 0).unwrap();
    assert!(run.notes.iter().any(|n| n.contains("solo")));
}

#[test]
fn repeated_eval_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let data = set(random_rows(100, 4, &mut rng));
    let metric = Metric::Diversity { n_pairs: 30 };
    let a = repeated_eval(&metric, &data, None, 20, 42).unwrap();
    let b = repeated_eval(&metric, &data, None, 20, 42).unwrap();
    assert_eq!(a, b);
    for (i, v) in a.values.iter().enumerate() {
        assert_eq!(*v, diversity(&data, 30, 42 + i as u64).unwrap());
    }
    let mean = a.values.iter().sum::<f64>() / 20.0;
    let sd = (a.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    assert!((a.ci95 - 1.96 * sd / 20f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fid_orthogonal_invariance(seed in any::<u64>(), d in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_rows(60, d, &mut rng);
        let b = gaussian(&vec![0.3; d], &vec![1.5; d], 80, &mut rng);
        let q = random_orthogonal(d, &mut rng);
        let before = fid(&set(a.clone()), &set(b.clone())).unwrap();
        let after = fid(&set(transform(&a, &q)), &set(transform(&b, &q))).unwrap();
        prop_assert!((before - after).abs() < 1e-6, "{} vs {}", before, after);
    }

    #[test]
    fn fid_nonnegative(seed in any::<u64>(), na in 2usize..40, nb in 2usize..40, d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = fid(&set(random_rows(na, d, &mut rng)), &set(random_rows(nb, d, &mut rng))).unwrap();
        prop_assert!(v >= 0.0 && v.is_finite());
    }

    #[test]
    fn sqrt_is_idempotent_on_squares(seed in any::<u64>(), d in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let m = &b * b.transpose();
        let s = matrix_sqrt_psd(&m).unwrap();
        let again = matrix_sqrt_psd(&(&s * &s)).unwrap();
        prop_assert!((&again - &s).norm() / s.norm().max(1e-300) < 1e-8);
    }

    #[test]
    fn retrieval_rates_are_bounded(seed in any::<u64>(), n in 32usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = EmbeddingSet::from_pairs(random_rows(n, 3, &mut rng), random_rows(n, 3, &mut rng)).unwrap();
        let curve = r_precision_curve(&data, 3, POOL_SIZE, seed).unwrap();
        prop_assert!(curve.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    }
}
