//! `features`: embedding-space metrics with repeated-run intervals.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use party_eval_core::embedding::EmbeddingSet;
use party_eval_core::metrics::{repeated_eval, Metric, MetricRun};
use serde::Serialize;

use crate::failure::Failure;
use crate::inputs;
use crate::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MetricName {
    Fid,
    Rprecision,
    Mmdist,
    Diversity,
    Multimodality,
}

pub struct FeaturesArgs {
    pub metric: MetricName,
    pub gen: PathBuf,
    pub reference: Option<PathBuf>,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub top_k: usize,
    pub pool_size: usize,
    pub pairs: Option<usize>,
    pub format: Format,
}

#[derive(Serialize)]
struct SetInfo {
    path: String,
    sha256: String,
    records: usize,
    dim: usize,
}

#[derive(Serialize)]
struct FeaturesConfig {
    gen: SetInfo,
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none")]
    reference: Option<SetInfo>,
    reps: usize,
    seed: u64,
}

#[derive(Serialize)]
struct Entry {
    label: String,
    params: Metric,
    #[serde(flatten)]
    run: MetricRun,
}

#[derive(Serialize)]
struct FeaturesReport {
    command: &'static str,
    version: &'static str,
    metric: &'static str,
    config: FeaturesConfig,
    results: Vec<Entry>,
}

fn load_set(path: &Path) -> Result<(EmbeddingSet, SetInfo), Failure> {
    let bytes = inputs::read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Failure::invalid(format!("{}: not UTF-8 text", path.display())))?;
    let set = EmbeddingSet::parse_jsonl(text).map_err(|e| Failure::core(path, e))?;
    let info = SetInfo {
        path: path.display().to_string(),
        sha256: inputs::sha256_hex(&bytes),
        records: set.len(),
        dim: set.dim(),
    };
    Ok((set, info))
}

/// The metric variants to run, with report labels.
fn plan(args: &FeaturesArgs) -> Result<Vec<(String, Metric)>, Failure> {
    use party_eval_core::metrics::{DIVERSITY_PAIRS, MULTIMODALITY_PAIRS};
    Ok(match args.metric {
        MetricName::Fid => vec![("fid".into(), Metric::Fid)],
        MetricName::Mmdist => vec![("mmdist".into(), Metric::MmDist)],
        MetricName::Diversity => vec![(
            "diversity".into(),
            Metric::Diversity { n_pairs: args.pairs.unwrap_or(DIVERSITY_PAIRS) },
        )],
        MetricName::Multimodality => vec![(
            "multimodality".into(),
            Metric::MultiModality { pairs_per_group: args.pairs.unwrap_or(MULTIMODALITY_PAIRS) },
        )],
        MetricName::Rprecision => {
            if args.top_k == 0 || args.top_k > args.pool_size {
                return Err(Failure::invalid(format!("--k must lie in 1..={}", args.pool_size)));
            }
            (1..=args.top_k)
                .map(|k| (format!("top{k}"), Metric::RPrecision { k, pool_size: args.pool_size }))
                .collect()
        }
    })
}

pub fn run_features(args: &FeaturesArgs) -> Result<(), Failure> {
    if args.reps == 0 {
        return Err(Failure::invalid("--reps must be at least 1"));
    }
    if args.pairs == Some(0) {
        return Err(Failure::invalid("--pairs must be at least 1"));
    }
    let metrics = plan(args)?;
    let (gen, gen_info) = load_set(&args.gen)?;
    let reference = match (&args.reference, args.metric) {
        (Some(p), _) => Some(load_set(p)?),
        (None, MetricName::Fid) => return Err(Failure::invalid("fid needs --ref")),
        (None, _) => None,
    };
    if reference.is_some() && args.metric != MetricName::Fid {
        log::warn!("--ref is only used by fid; ignoring it");
    }
    let ref_set = reference.as_ref().map(|(s, _)| s);

    let mut results = Vec::with_capacity(metrics.len());
    for (label, metric) in metrics {
        let run = repeated_eval(&metric, &gen, ref_set, args.reps, args.seed).map_err(|e| Failure::core(&args.gen, e))?;
        log::info!("{label}: {:.6} +- {:.6}", run.mean, run.ci95);
        results.push(Entry { label, params: metric, run });
    }
    let report = FeaturesReport {
        command: "features",
        version: env!("CARGO_PKG_VERSION"),
        metric: results[0].params.name(),
        config: FeaturesConfig {
            gen: gen_info,
            reference: reference.map(|(_, info)| info),
            reps: args.reps,
            seed: args.seed,
        },
        results,
    };
    let text = match args.format {
        Format::Json => inputs::to_json(&report),
        Format::Csv => {
            let mut out = String::from("label,rep,seed,value\n");
            for e in &report.results {
                for (i, v) in e.run.values.iter().enumerate() {
                    let _ = writeln!(out, "{},{i},{},{v}", e.label, args.seed.wrapping_add(i as u64));
                }
            }
            out
        }
    };
    inputs::write_output(&args.out, &text)
}
