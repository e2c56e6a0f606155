//! `coherence` and `build-stats`.

use std::fmt::Write as _;
use std::path::PathBuf;

use party_eval_core::metrics::MetricRun;
use party_eval_core::motion::MotionSequence;
use party_eval_core::spatial::{build_reference_stats, spatial_coherence, RefStats};
use party_eval_core::temporal::{temporal_coherence, CoherenceParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::failure::Failure;
use crate::inputs::{self, MotionFile, PartitionInfo};
use crate::Format;

pub struct CoherenceArgs {
    pub input: PathBuf,
    pub skeleton: String,
    pub partition: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub stats: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub reps: Option<usize>,
    pub strict: bool,
    pub format: Format,
}

#[derive(Serialize)]
struct StatsInfo {
    path: String,
    sha256: String,
    corpus_digest: String,
    count: usize,
}

#[derive(Serialize)]
struct CoherenceConfig {
    input: String,
    input_digest: String,
    skeleton: String,
    partition: PartitionInfo,
    params: CoherenceParams,
    stats: StatsInfo,
    seed: u64,
    reps: Option<usize>,
    strict: bool,
}

#[derive(Serialize)]
struct SequenceScore {
    id: String,
    file: String,
    sha256: String,
    frames: usize,
    tc: f64,
    sc: f64,
    /// Frames whose limb or torso direction was too short to define an angle.
    degenerate_angle_frames: usize,
}

#[derive(Serialize)]
struct Skipped {
    file: String,
    error: String,
}

/// Mean, sample std and 95% half-width over sequences.
#[derive(Serialize)]
struct Summary {
    n: usize,
    mean: f64,
    std: f64,
    ci95: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { n, mean, std, ci95: 1.96 * std / (n as f64).sqrt() }
    }
}

#[derive(Serialize)]
struct Aggregate {
    tc: Summary,
    sc: Summary,
}

/// Bootstrap over sequences: repetition `r` draws `n` sequences with
/// replacement using seed `seed + r`.
#[derive(Serialize)]
struct Resampling {
    tc: MetricRun,
    sc: MetricRun,
}

#[derive(Serialize)]
struct CoherenceReport {
    command: &'static str,
    version: &'static str,
    config: CoherenceConfig,
    sequences: Vec<SequenceScore>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    skipped: Vec<Skipped>,
    aggregate: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none")]
    resampling: Option<Resampling>,
}

/// Reads every file in parallel and keeps input order. I/O failures abort;
/// validation failures are returned per file.
fn load_all(files: &[MotionFile], skeleton: &str) -> Result<Vec<(String, Result<MotionSequence, Failure>)>, Failure> {
    files
        .par_iter()
        .map(|f| {
            let bytes = inputs::read_bytes(&f.path)?;
            Ok((inputs::sha256_hex(&bytes), inputs::load_motion(f, &bytes, skeleton)))
        })
        .collect()
}

fn input_digest(files: &[MotionFile], shas: &[String]) -> String {
    let mut listing = String::new();
    for (f, sha) in files.iter().zip(shas) {
        let _ = writeln!(listing, "{} {sha}", f.name);
    }
    inputs::sha256_hex(listing.as_bytes())
}

fn report_invalid(list: &[Skipped]) -> Failure {
    for s in list {
        eprintln!("  {}: {}", s.file, s.error);
    }
    Failure::invalid(format!("{} invalid input file(s)", list.len()))
}

fn bootstrap(values: &[(f64, f64)], reps: usize, seed: u64) -> Result<Resampling, Failure> {
    let n = values.len();
    let (tc, sc): (Vec<f64>, Vec<f64>) = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
            let (mut t, mut s) = (0.0, 0.0);
            for _ in 0..n {
                let (a, b) = values[rng.random_range(0..n)];
                t += a;
                s += b;
            }
            (t / n as f64, s / n as f64)
        })
        .unzip();
    let run = |name: &str, v: Vec<f64>| MetricRun::from_values(name, v, Vec::new()).map_err(|e| Failure::invalid(e.to_string()));
    Ok(Resampling { tc: run("tc", tc)?, sc: run("sc", sc)? })
}

pub fn run_coherence(args: &CoherenceArgs) -> Result<(), Failure> {
    if args.reps == Some(0) {
        return Err(Failure::invalid("--reps must be at least 1"));
    }
    let (partition, partition_info) = inputs::load_partition(&args.skeleton, args.partition.as_deref())?;
    let params = inputs::load_params(&args.skeleton, args.params.as_deref())?;
    let stats_bytes = inputs::read_bytes(&args.stats)?;
    let stats_text = std::str::from_utf8(&stats_bytes)
        .map_err(|_| Failure::invalid(format!("{}: not UTF-8 text", args.stats.display())))?;
    let stats = RefStats::from_json(stats_text).map_err(|e| Failure::core(&args.stats, e))?;
    if stats.skeleton != args.skeleton {
        return Err(Failure::invalid(format!(
            "{}: stats are for skeleton `{}`, not `{}`",
            args.stats.display(),
            stats.skeleton,
            args.skeleton
        )));
    }
    stats.check_covers(&partition).map_err(|e| Failure::core(&args.stats, e))?;

    let files = inputs::list_motion_files(&args.input)?;
    let loaded = load_all(&files, &args.skeleton)?;
    let shas: Vec<String> = loaded.iter().map(|(sha, _)| sha.clone()).collect();

    let scored: Vec<Result<SequenceScore, Failure>> = files
        .par_iter()
        .zip(loaded.into_par_iter())
        .map(|(file, (sha, seq))| {
            let seq = seq?;
            let tc = temporal_coherence(&seq, &partition, &params).map_err(|e| Failure::core(&file.path, e))?;
            let sc = spatial_coherence(&seq, &partition, &stats, &params).map_err(|e| Failure::core(&file.path, e))?;
            let mut frames: Vec<usize> = sc.degenerate.iter().map(|d| d.frame).collect();
            frames.dedup();
            Ok(SequenceScore {
                id: file.id.clone(),
                file: file.name.clone(),
                sha256: sha,
                frames: seq.frame_count(),
                tc: tc.score,
                sc: sc.score,
                degenerate_angle_frames: frames.len(),
            })
        })
        .collect();

    let mut sequences = Vec::new();
    let mut skipped = Vec::new();
    for (file, result) in files.iter().zip(scored) {
        match result {
            Ok(s) => sequences.push(s),
            Err(f) if f.is_invalid() => {
                log::warn!("skipping {}: {f}", file.name);
                skipped.push(Skipped { file: file.name.clone(), error: f.to_string() });
            }
            Err(f) => return Err(f),
        }
    }
    if !skipped.is_empty() && args.strict {
        return Err(report_invalid(&skipped));
    }
    if sequences.is_empty() {
        return Err(report_invalid(&skipped));
    }

    let tcs: Vec<f64> = sequences.iter().map(|s| s.tc).collect();
    let scs: Vec<f64> = sequences.iter().map(|s| s.sc).collect();
    let resampling = match args.reps {
        Some(reps) => {
            let pairs: Vec<(f64, f64)> = tcs.iter().copied().zip(scs.iter().copied()).collect();
            Some(bootstrap(&pairs, reps, args.seed)?)
        }
        None => None,
    };
    let report = CoherenceReport {
        command: "coherence",
        version: env!("CARGO_PKG_VERSION"),
        config: CoherenceConfig {
            input: args.input.display().to_string(),
            input_digest: input_digest(&files, &shas),
            skeleton: args.skeleton.clone(),
            partition: partition_info,
            params,
            stats: StatsInfo {
                path: args.stats.display().to_string(),
                sha256: inputs::sha256_hex(&stats_bytes),
                corpus_digest: stats.digest.clone(),
                count: stats.count,
            },
            seed: args.seed,
            reps: args.reps,
            strict: args.strict,
        },
        aggregate: Aggregate { tc: Summary::of(&tcs), sc: Summary::of(&scs) },
        sequences,
        skipped,
        resampling,
    };
    let text = match args.format {
        Format::Json => inputs::to_json(&report),
        Format::Csv => coherence_csv(&report),
    };
    inputs::write_output(&args.out, &text)?;
    log::info!(
        "{} sequences: TC {:.4}, SC {:.4}",
        report.aggregate.tc.n,
        report.aggregate.tc.mean,
        report.aggregate.sc.mean
    );
    Ok(())
}

fn coherence_csv(report: &CoherenceReport) -> String {
    let mut out = String::from("id,file,frames,tc,sc\n");
    for s in &report.sequences {
        let _ = writeln!(out, "{},{},{},{},{}", s.id, s.file, s.frames, s.tc, s.sc);
    }
    out
}

pub struct BuildStatsArgs {
    pub corpus: PathBuf,
    pub skeleton: String,
    pub partition: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub out: PathBuf,
    pub format: Format,
}

pub fn run_build_stats(args: &BuildStatsArgs) -> Result<(), Failure> {
    let (partition, _) = inputs::load_partition(&args.skeleton, args.partition.as_deref())?;
    let params = inputs::load_params(&args.skeleton, args.params.as_deref())?;
    let files = inputs::list_motion_files(&args.corpus)?;
    let loaded = load_all(&files, &args.skeleton)?;
    let mut corpus = Vec::with_capacity(files.len());
    let mut bad = Vec::new();
    for (file, (_, seq)) in files.iter().zip(loaded) {
        match seq {
            Ok(seq) => corpus.push((file.id.clone(), seq)),
            Err(f) => bad.push(Skipped { file: file.name.clone(), error: f.to_string() }),
        }
    }
    // statistics must describe the whole corpus, so any bad file is fatal
    if !bad.is_empty() {
        return Err(report_invalid(&bad));
    }
    let stats = build_reference_stats(&corpus, &partition, params.epsilon).map_err(|e| Failure::core(&args.corpus, e))?;
    let text = match args.format {
        Format::Json => {
            let mut s = stats.to_json_string();
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut out = String::from("kind,key,mean,std\n");
            for (k, s) in &stats.pairs {
                let _ = writeln!(out, "distance,{k},{},{}", s.mean, s.std);
            }
            for (k, s) in &stats.angles {
                let _ = writeln!(out, "angle,{k},{},{}", s.mean, s.std);
            }
            out
        }
    };
    inputs::write_output(&args.out, &text)?;
    log::info!("pooled {} frames from {} sequences", stats.count, corpus.len());
    Ok(())
}
