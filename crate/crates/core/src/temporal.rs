//! Temporal Coherence (TC).
//!
//! Per body part, the RMS joint speed between consecutive frames forms a
//! velocity series. The series is split into overlapping windows and
//! z-normalized per window. Every part pair is then cross-correlated over
//! integer lags in `[-tau_max, tau_max]`. Each lag profile collapses to one
//! value in `[0, 1]`: a softmax-weighted mean correlation (temperature
//! `sigma`), clamped at zero and damped by `exp(-<|lag|> / kappa)`. TC is the
//! mean of these values over windows and pairs.
//!
//! Lagged products that fall outside the window contribute zero, so the
//! normalizer is lag independent and `|r| <= 1`. A series with zero norm (a
//! motionless part) correlates to zero with everything.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{MotionSequence, PartitionMap, KITML_21};

/// Parameters shared by the temporal and spatial scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceParams {
    #[serde(rename = "L")]
    pub window_len: usize,
    pub stride: usize,
    pub tau_max: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub beta_d: f64,
    pub beta_theta: f64,
    pub epsilon: f64,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        CoherenceParams {
            window_len: 20,
            stride: 10,
            tau_max: 15,
            sigma: 0.1,
            kappa: 5.0,
            beta_d: 1.5,
            beta_theta: 1.5,
            epsilon: 1e-8,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(rename = "L")]
    window_len: Option<usize>,
    stride: Option<usize>,
    tau_max: Option<usize>,
    sigma: Option<f64>,
    kappa: Option<f64>,
    beta_d: Option<f64>,
    beta_theta: Option<f64>,
    epsilon: Option<f64>,
}

impl CoherenceParams {
    /// Tuned defaults per dataset skeleton. KIT-ML prefers a sharper softmax.
    pub fn for_skeleton(skeleton_id: &str) -> Self {
        let mut p = Self::default();
        if skeleton_id == KITML_21 {
            p.sigma = 0.05;
        }
        p
    }

    /// Parses a params file; absent keys take defaults, a missing `stride`
    /// becomes `L / 2`.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_over(text, &Self::default())
    }

    /// Like [`CoherenceParams::from_json`], with absent keys taken from `base`.
    pub fn from_json_over(text: &str, base: &Self) -> Result<Self> {
        let raw: RawParams = serde_json::from_str(text)?;
        let d = *base;
        let window_len = raw.window_len.unwrap_or(d.window_len);
        let p = CoherenceParams {
            window_len,
            stride: raw.stride.unwrap_or(if raw.window_len.is_some() { (window_len / 2).max(1) } else { d.stride }),
            tau_max: raw.tau_max.unwrap_or(d.tau_max),
            sigma: raw.sigma.unwrap_or(d.sigma),
            kappa: raw.kappa.unwrap_or(d.kappa),
            beta_d: raw.beta_d.unwrap_or(d.beta_d),
            beta_theta: raw.beta_theta.unwrap_or(d.beta_theta),
            epsilon: raw.epsilon.unwrap_or(d.epsilon),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must be positive, got {v}")))
            }
        };
        if self.window_len < 2 {
            return Err(Error::validation("L must be at least 2"));
        }
        if self.stride < 1 || self.stride > self.window_len {
            return Err(Error::validation("stride must lie in [1, L]"));
        }
        if self.tau_max >= self.window_len {
            return Err(Error::validation("tau_max must be smaller than L"));
        }
        positive("sigma", self.sigma)?;
        positive("kappa", self.kappa)?;
        positive("beta_d", self.beta_d)?;
        positive("beta_theta", self.beta_theta)?;
        positive("epsilon", self.epsilon)
    }
}

/// RMS joint displacement of a part between consecutive frames, length `T - 1`.
pub fn rms_velocity(seq: &MotionSequence, partition: &PartitionMap, part: &str) -> Result<Vec<f64>> {
    let joints = &partition.part(part)?.joints;
    rms_velocity_of(seq, joints)
}

fn rms_velocity_of(seq: &MotionSequence, joints: &[usize]) -> Result<Vec<f64>> {
    let frames = seq.frame_count();
    if frames < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: frames });
    }
    if let Some(&j) = joints.iter().find(|&&j| j >= seq.joint_count()) {
        return Err(Error::validation(format!("joint {j} out of range")));
    }
    let n = joints.len() as f64;
    Ok((1..frames)
        .map(|t| {
            let sq: f64 = joints
                .iter()
                .map(|&j| {
                    let (a, b) = (seq.position(t, j), seq.position(t - 1, j));
                    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>()
                })
                .sum();
            (sq / n).sqrt()
        })
        .collect())
}

/// Window ranges over a series of `series_len` samples.
///
/// Full windows of `window_len` start every `stride` samples. When samples are
/// left over, one more window starts on the stride grid and runs to the end; it
/// is kept if at least `window_len / 2` long, otherwise the last full window is
/// stretched to the end instead. A series shorter than one window gets a
/// single window covering all of it.
pub fn sliding_windows(series_len: usize, window_len: usize, stride: usize) -> Result<Vec<Range<usize>>> {
    if series_len < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: series_len });
    }
    if window_len < 2 || stride == 0 {
        return Err(Error::validation("window length must be >= 2 and stride >= 1"));
    }
    if series_len <= window_len {
        return Ok(vec![0..series_len]);
    }
    let mut windows: Vec<Range<usize>> = (0..)
        .map(|i| i * stride)
        .take_while(|s| s + window_len <= series_len)
        .map(|s| s..s + window_len)
        .collect();
    let last = windows.last().cloned().expect("at least one full window");
    if last.end < series_len {
        let next = last.start + stride;
        if 2 * (series_len - next) >= window_len {
            windows.push(next..series_len);
        } else {
            windows.last_mut().unwrap().end = series_len;
        }
    }
    Ok(windows)
}

/// `(x - mean) / (std + eps)` over `window`, population std.
pub fn znorm_window(series: &[f64], window: Range<usize>, eps: f64) -> Result<Vec<f64>> {
    if window.start >= window.end || window.end > series.len() {
        return Err(Error::validation(format!(
            "window {window:?} outside series of length {}",
            series.len()
        )));
    }
    let xs = &series[window];
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return Ok(vec![0.0; xs.len()]);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(xs.iter().map(|x| (x - mean) / (std + eps)).collect())
}

/// Correlation values indexed by lag `-tau_max..=tau_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagProfile {
    tau_max: usize,
    values: Vec<f64>,
}

impl LagProfile {
    pub fn new(tau_max: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 2 * tau_max + 1 {
            return Err(Error::dims("lag profile", 2 * tau_max + 1, values.len()));
        }
        Ok(LagProfile { tau_max, values })
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, tau: isize) -> f64 {
        self.values[(tau + self.tau_max as isize) as usize]
    }

    pub fn lags(&self) -> impl Iterator<Item = isize> {
        let m = self.tau_max as isize;
        -m..=m
    }

    /// Lag with the largest correlation; the smallest lag wins ties.
    pub fn argmax(&self) -> isize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best as isize - self.tau_max as isize
    }
}

/// `r(tau) = sum_t a(t) b(t + tau) / (|a| |b|)` with out-of-range terms dropped.
pub fn cross_correlation(a: &[f64], b: &[f64], tau_max: usize) -> Result<LagProfile> {
    if a.len() != b.len() {
        return Err(Error::dims("cross-correlation inputs", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: a.len() });
    }
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = a.len() as isize;
    let m = tau_max as isize;
    let values = if norm_a == 0.0 || norm_b == 0.0 {
        vec![0.0; 2 * tau_max + 1]
    } else {
        let denom = norm_a * norm_b;
        (-m..=m)
            .map(|tau| {
                let lo = 0.max(-tau);
                let hi = n.min(n - tau);
                let mut acc = 0.0;
                for t in lo..hi {
                    acc += a[t as usize] * b[(t + tau) as usize];
                }
                (acc / denom).clamp(-1.0, 1.0)
            })
            .collect()
    };
    LagProfile::new(tau_max, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedCorrelation {
    /// Softmax-weighted mean correlation over lags.
    pub expected_r: f64,
    /// Softmax-weighted mean absolute lag, in frames.
    pub mean_abs_lag: f64,
    /// `max(0, expected_r) * exp(-mean_abs_lag / kappa)`.
    pub value: f64,
}

pub fn refined_correlation(profile: &LagProfile, sigma: f64, kappa: f64) -> RefinedCorrelation {
    let r = profile.values();
    let peak = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = r.iter().map(|v| ((v - peak) / sigma).exp()).collect();
    let total: f64 = weights.iter().sum();
    let expected_r = weights.iter().zip(r).map(|(w, v)| w * v).sum::<f64>() / total;
    let mean_abs_lag = weights
        .iter()
        .zip(profile.lags())
        .map(|(w, tau)| w * tau.unsigned_abs() as f64)
        .sum::<f64>()
        / total;
    RefinedCorrelation {
        expected_r,
        mean_abs_lag,
        value: expected_r.max(0.0) * (-mean_abs_lag / kappa).exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalReport {
    pub score: f64,
    /// Velocity-sample ranges of each window.
    pub windows: Vec<Range<usize>>,
    /// Pair keys in column order of `per_window_pair`.
    pub pair_keys: Vec<String>,
    /// Refined correlation per window (rows) and part pair (columns).
    pub per_window_pair: Vec<Vec<f64>>,
}

impl TemporalReport {
    /// Refined correlations of one pair across windows.
    pub fn pair_series(&self, key: &str) -> Option<Vec<f64>> {
        let col = self.pair_keys.iter().position(|k| k == key)?;
        Some(self.per_window_pair.iter().map(|row| row[col]).collect())
    }
}

pub fn temporal_coherence(
    seq: &MotionSequence,
    partition: &PartitionMap,
    params: &CoherenceParams,
) -> Result<TemporalReport> {
    params.validate()?;
    if seq.frame_count() < 3 {
        return Err(Error::InsufficientFrames { needed: 3, got: seq.frame_count() });
    }
    partition.check_joint_count(seq.joint_count())?;
    let pairs = partition.pairs();
    if pairs.is_empty() {
        return Err(Error::validation("temporal coherence needs at least two parts"));
    }
    let velocities = partition
        .parts()
        .iter()
        .map(|p| rms_velocity_of(seq, &p.joints))
        .collect::<Result<Vec<_>>>()?;
    let windows = sliding_windows(seq.frame_count() - 1, params.window_len, params.stride)?;

    let mut per_window_pair = Vec::with_capacity(windows.len());
    for w in &windows {
        let normalized = velocities
            .iter()
            .map(|v| znorm_window(v, w.clone(), params.epsilon))
            .collect::<Result<Vec<_>>>()?;
        let row = pairs
            .iter()
            .map(|&(g, h)| {
                let profile = cross_correlation(&normalized[g], &normalized[h], params.tau_max)?;
                Ok(refined_correlation(&profile, params.sigma, params.kappa).value)
            })
            .collect::<Result<Vec<f64>>>()?;
        per_window_pair.push(row);
    }
    let count = (windows.len() * pairs.len()) as f64;
    let score = per_window_pair.iter().flatten().sum::<f64>() / count;
    Ok(TemporalReport {
        score,
        windows,
        pair_keys: pairs.iter().map(|&(g, h)| partition.pair_key(g, h)).collect(),
        per_window_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{BodyPart, TorsoAxis};
    use proptest::prelude::*;

    fn two_part_partition() -> PartitionMap {
        PartitionMap::new(
            vec![
                BodyPart { name: "a".into(), joints: vec![0], end_joint: 0 },
                BodyPart { name: "b".into(), joints: vec![1, 2], end_joint: 2 },
            ],
            vec![],
            TorsoAxis { origin: 0, tip: 1 },
        )
        .unwrap()
    }

    #[test]
    fn rms_velocity_cases() {
        let p = two_part_partition();
        // stationary
        let still = MotionSequence::new("custom", 20.0, vec![vec![[1.0, 2.0, 3.0]; 3]; 4]).unwrap();
        assert_eq!(rms_velocity(&still, &p, "a").unwrap(), vec![0.0; 3]);
        // unit steps on x
        let frames: Vec<Vec<[f64; 3]>> = (0..5).map(|t| vec![[t as f64, 0.0, 0.0]; 3]).collect();
        let moving = MotionSequence::new("custom", 20.0, frames).unwrap();
        assert_eq!(rms_velocity(&moving, &p, "a").unwrap(), vec![1.0; 4]);
        // displacement norms 3 and 4 on the two joints of part b
        let frames = vec![
            vec![[0.0; 3]; 3],
            vec![[0.0; 3], [3.0, 0.0, 0.0], [0.0, 4.0, 0.0]],
        ];
        let s = MotionSequence::new("custom", 20.0, frames).unwrap();
        let v = rms_velocity(&s, &p, "b").unwrap();
        assert!((v[0] - 3.5355339059327378).abs() < 1e-15);
        assert!((v[0] - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn window_layouts() {
        assert_eq!(sliding_windows(40, 20, 10).unwrap(), vec![0..20, 10..30, 20..40]);
        assert_eq!(sliding_windows(12, 20, 10).unwrap(), vec![0..12]);
        assert_eq!(sliding_windows(20, 20, 10).unwrap(), vec![0..20]);
        // tail of 5 after [20, 40): partial window 30..45 has length 15 >= 10
        assert_eq!(sliding_windows(45, 20, 10).unwrap(), vec![0..20, 10..30, 20..40, 30..45]);
        // stride L: tail of 5 < L/2 is merged, tail of 12 is kept
        assert_eq!(sliding_windows(45, 20, 20).unwrap(), vec![0..20, 20..45]);
        assert_eq!(sliding_windows(52, 20, 20).unwrap(), vec![0..20, 20..40, 40..52]);
        assert!(sliding_windows(1, 20, 10).is_err());
    }

    #[test]
    fn znorm_cases() {
        assert_eq!(znorm_window(&[0.3; 6], 0..6, 1e-8).unwrap(), vec![0.0; 6]);
        let z = znorm_window(&[0.0, 2.0], 0..2, 1e-8).unwrap();
        assert!((z[0] + 1.0).abs() <= 1e-8 && z[0] > -1.0);
        assert!((z[1] - 1.0).abs() <= 1e-8 && z[1] < 1.0);
        assert_eq!(z[1], 0.9999999900000002);
        assert!(znorm_window(&[1.0, 2.0], 1..3, 1e-8).is_err());
    }

    #[test]
    fn cross_correlation_cases() {
        let s: Vec<f64> = (0..20).map(|t| ((t * 7) % 5) as f64 - 2.0).collect();
        let r = cross_correlation(&s, &s, 5).unwrap();
        assert!((r.at(0) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        assert!((cross_correlation(&s, &neg, 5).unwrap().at(0) + 1.0).abs() < 1e-12);
        let zeros = vec![0.0; 20];
        assert!(cross_correlation(&zeros, &zeros, 5).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(cross_correlation(&s, &s[1..], 5).is_err());
    }

    #[test]
    fn shifted_copy_peaks_at_shift() {
        let base = [0.3, -1.2, 2.0, 0.1, -0.7, 1.5, -2.2, 0.9, 0.4, -0.3, 1.1, -1.9, 0.2, 0.8, -0.5, 1.7];
        let mut shifted = vec![0.0; base.len()];
        shifted[3..].copy_from_slice(&base[..base.len() - 3]);
        let r = cross_correlation(&base, &shifted, 6).unwrap();
        // brute force over all lags
        let mut best = (0isize, f64::NEG_INFINITY);
        for tau in -6isize..=6 {
            let mut acc = 0.0;
            for t in 0..base.len() as isize {
                let u = t + tau;
                if (0..base.len() as isize).contains(&u) {
                    acc += base[t as usize] * shifted[u as usize];
                }
            }
            if acc > best.1 {
                best = (tau, acc);
            }
        }
        assert_eq!(best.0, 3);
        assert_eq!(r.argmax(), 3);
    }

    #[test]
    fn refined_correlation_closed_forms() {
        let mut delta = vec![-1.0; 31];
        delta[15] = 1.0;
        let v = refined_correlation(&LagProfile::new(15, delta).unwrap(), 0.1, 5.0).value;
        assert!((v - 0.9999997773954392).abs() < 1e-12);

        let flat = refined_correlation(&LagProfile::new(15, vec![-0.5; 31]).unwrap(), 0.1, 5.0);
        assert_eq!(flat.value, 0.0);

        let ones = refined_correlation(&LagProfile::new(15, vec![1.0; 31]).unwrap(), 0.1, 5.0);
        assert!((ones.expected_r - 1.0).abs() < 1e-15);
        assert!((ones.mean_abs_lag - 240.0 / 31.0).abs() < 1e-12);
        assert!((ones.value - (-48.0f64 / 31.0).exp()).abs() < 1e-10);
        assert!((ones.value - 0.21259058549385654).abs() < 1e-12);
    }

    #[test]
    fn stationary_parts_score_zero() {
        let still = MotionSequence::new("custom", 20.0, vec![vec![[1.0, 2.0, 3.0]; 3]; 30]).unwrap();
        let r = temporal_coherence(&still, &two_part_partition(), &CoherenceParams::default()).unwrap();
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn too_short_sequence() {
        let s = MotionSequence::new("custom", 20.0, vec![vec![[0.0; 3]; 3]; 2]).unwrap();
        assert!(matches!(
            temporal_coherence(&s, &two_part_partition(), &CoherenceParams::default()),
            Err(Error::InsufficientFrames { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn params_json() {
        let p = CoherenceParams::from_json(
            r#"{"L":20,"stride":10,"tau_max":15,"sigma":0.1,"kappa":5.0,"beta_d":1.5,"beta_theta":1.5,"epsilon":1e-8}"#,
        )
        .unwrap();
        assert_eq!(p, CoherenceParams::default());
        assert_eq!(CoherenceParams::from_json(r#"{"L":30}"#).unwrap().stride, 15);
        assert!(CoherenceParams::from_json(r#"{"L":10,"tau_max":10}"#).is_err());
        assert!(CoherenceParams::from_json(r#"{"sigma":0}"#).is_err());
        assert!(CoherenceParams::from_json(r#"{"gamma":1}"#).is_err());
        let json = serde_json::to_string(&CoherenceParams::default()).unwrap();
        assert_eq!(CoherenceParams::from_json(&json).unwrap(), CoherenceParams::default());
        let kit = CoherenceParams::for_skeleton(KITML_21);
        let p = CoherenceParams::from_json_over(r#"{"kappa":4.0}"#, &kit).unwrap();
        assert_eq!((p.sigma, p.kappa, p.stride), (0.05, 4.0, 10));
    }

    proptest! {
        #[test]
        fn self_correlation_is_one(xs in proptest::collection::vec(-10.0f64..10.0, 3..40)) {
            prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
            let s = znorm_window(&xs, 0..xs.len(), 1e-8).unwrap();
            let r = cross_correlation(&s, &s, 2.min(xs.len() - 1)).unwrap();
            prop_assert!((r.at(0) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn znorm_mean_is_zero(xs in proptest::collection::vec(-100.0f64..100.0, 2..60)) {
            let s = znorm_window(&xs, 0..xs.len(), 1e-8).unwrap();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            prop_assert!(mean.abs() < 1e-12);
        }

        #[test]
        fn correlation_is_bounded_and_reflected(
            a in proptest::collection::vec(-5.0f64..5.0, 8),
            b in proptest::collection::vec(-5.0f64..5.0, 8),
        ) {
            let ab = cross_correlation(&a, &b, 5).unwrap();
            let ba = cross_correlation(&b, &a, 5).unwrap();
            for tau in ab.lags() {
                prop_assert!(ab.at(tau).abs() <= 1.0);
                prop_assert!((ab.at(tau) - ba.at(-tau)).abs() < 1e-12);
            }
            let x = refined_correlation(&ab, 0.1, 5.0).value;
            let y = refined_correlation(&ba, 0.1, 5.0).value;
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - y).abs() < 1e-12);
        }

        #[test]
        fn penalty_is_monotone_in_lag(r in 0.01f64..1.0, lag_a in 0.0f64..15.0, lag_b in 0.0f64..15.0) {
            let damped = |lag: f64| r * (-lag / 5.0).exp();
            let (lo, hi) = if lag_a <= lag_b { (lag_a, lag_b) } else { (lag_b, lag_a) };
            prop_assert!(damped(hi) <= damped(lo));
        }
    }
}
