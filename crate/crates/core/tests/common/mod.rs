//! Test-only helpers: a nested-loop temporal coherence evaluator written
//! against the definitions, and frozen oracle values.
#![allow(dead_code)]

use party_eval_core::motion::{MotionSequence, PartitionMap};

/// Python brute-force values (tests/oracles).
pub const CHIRP_TC: f64 = 0.989543944837196;
pub const NOISE_TC_MEAN: f64 = 0.09245369553467941;
pub const NOISE_TC_STD: f64 = 0.005543992789268828;
pub const NOISE_TC_TRIALS: f64 = 1000.0;
pub const SC_MC_MEAN: f64 = 0.7267032204522832;
pub const SC_MC_STD: f64 = 0.013482492700788122;
pub const SC_MC_TRIALS: f64 = 1000.0;

pub fn brute_force_tc(seq: &MotionSequence, partition: &PartitionMap, l: usize, stride: usize, tau_max: usize, sigma: f64, kappa: f64, eps: f64) -> f64 {
    let parts = partition.parts();
    let mut vel: Vec<Vec<f64>> = Vec::new();
    for p in parts {
        let mut v = Vec::new();
        for t in 1..seq.frame_count() {
            let mut acc = 0.0;
            for &j in &p.joints {
                let (a, b) = (seq.position(t, j), seq.position(t - 1, j));
                acc += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
            }
            v.push((acc / p.joints.len() as f64).sqrt());
        }
        vel.push(v);
    }
    let n = vel[0].len();
    let mut wins = Vec::new();
    if n <= l {
        wins.push((0, n));
    } else {
        let mut s = 0;
        while s + l <= n {
            wins.push((s, s + l));
            s += stride;
        }
        let (ls, le) = *wins.last().unwrap();
        if le < n {
            let next = ls + stride;
            if 2 * (n - next) >= l {
                wins.push((next, n));
            } else {
                wins.last_mut().unwrap().1 = n;
            }
        }
    }
    let znorm = |x: &[f64]| -> Vec<f64> {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt();
        if x.iter().all(|v| *v == x[0]) {
            return vec![0.0; x.len()];
        }
        x.iter().map(|v| (v - m) / (sd + eps)).collect()
    };
    let mut total = 0.0;
    let mut count = 0;
    for &(a, b) in &wins {
        let z: Vec<Vec<f64>> = vel.iter().map(|v| znorm(&v[a..b])).collect();
        for g in 0..parts.len() {
            for h in g + 1..parts.len() {
                let len = b - a;
                let na = z[g].iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = z[h].iter().map(|x| x * x).sum::<f64>().sqrt();
                let mut r = Vec::new();
                for tau in -(tau_max as i64)..=tau_max as i64 {
                    let mut acc = 0.0;
                    for t in 0..len as i64 {
                        let u = t + tau;
                        if u >= 0 && u < len as i64 {
                            acc += z[g][t as usize] * z[h][u as usize];
                        }
                    }
                    r.push(if na == 0.0 || nb == 0.0 { 0.0 } else { acc / (na * nb) });
                }
                let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = r.iter().map(|v| ((v - m) / sigma).exp()).collect();
                let zsum: f64 = w.iter().sum();
                let big_r = w.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / zsum;
                let lag = w.iter().enumerate().map(|(i, wi)| wi * (i as f64 - tau_max as f64).abs()).sum::<f64>() / zsum;
                total += big_r.max(0.0) * (-lag / kappa).exp();
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Mean of `values` and the 4-sigma half-width for comparing it against an
/// oracle mean estimated from `oracle_trials` draws with spread `oracle_std`.
pub fn band(values: &[f64], oracle_std: f64, oracle_trials: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 4.0 * (var / n + oracle_std.powi(2) / oracle_trials).sqrt();
    (mean, half)
}
