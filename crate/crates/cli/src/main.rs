//! `party-eval`: batch front-end for coherence scoring, reference statistics,
//! embedding metrics and the kernel self-test.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 I/O failure.

mod coherence;
mod failure;
mod features;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use party_eval_core::kernels::selftest;
use serde::Serialize;

use failure::Failure;

const LOG_ENV: &str = "PARTY_EVAL_LOG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "party-eval", version, about = "Part-aware motion evaluation toolkit")]
struct Cli {
    /// Worker threads; defaults to the number of cores. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every motion file in a directory for temporal and spatial coherence.
    Coherence {
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        #[arg(long, value_name = "ID")]
        skeleton: String,
        /// Partition override JSON; required for skeletons without a built-in split.
        #[arg(long, value_name = "FILE")]
        partition: Option<PathBuf>,
        /// Coherence parameter JSON; absent keys keep the skeleton defaults.
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        /// Reference statistics from `build-stats`.
        #[arg(long, value_name = "FILE")]
        stats: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Bootstrap repetitions over sequences for the aggregate interval.
        #[arg(long)]
        reps: Option<usize>,
        /// Fail on any invalid file instead of skipping it.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Pool inter-part distance and limb angle statistics over a corpus.
    BuildStats {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[arg(long, value_name = "ID")]
        skeleton: String,
        #[arg(long, value_name = "FILE")]
        partition: Option<PathBuf>,
        /// Coherence parameter JSON; only `epsilon` is used here.
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Feature-space metrics over JSON-lines embedding dumps.
    Features {
        #[arg(value_enum)]
        metric: features::MetricName,
        #[arg(long, value_name = "FILE")]
        gen: PathBuf,
        /// Reference embeddings (fid only).
        #[arg(long = "ref", value_name = "FILE")]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// rprecision: report top-1 through top-k.
        #[arg(long = "k", default_value_t = 3)]
        top_k: usize,
        /// rprecision: candidates per retrieval, the true text included.
        #[arg(long, default_value_t = party_eval_core::metrics::POOL_SIZE)]
        pool_size: usize,
        /// diversity: pair count (default 300); multimodality: pairs per group (default 10).
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Reference kernel checks.
    Kernels {
        #[command(subcommand)]
        action: KernelsAction,
    },
}

#[derive(Subcommand)]
enum KernelsAction {
    /// Run the kernel property suite and print one line per check.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the results as JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct SelftestReport<'a> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    passed: bool,
    checks: &'a [selftest::CheckResult],
}

fn init_logging() {
    let level = std::env::var(LOG_ENV).unwrap_or_default().to_ascii_lowercase();
    let (filter, bad) = match level.as_str() {
        "" => ("warn", false),
        l @ ("error" | "warn" | "info" | "debug") => (l, false),
        _ => ("warn", true),
    };
    env_logger::Builder::new()
        .parse_filters(filter)
        .format_timestamp(None)
        .format_target(false)
        .init();
    if bad {
        log::warn!("{LOG_ENV}={level} is not one of error, warn, info, debug; using warn");
    }
}

fn run_selftest(seed: u64, out: Option<PathBuf>) -> Result<bool, Failure> {
    let checks = selftest::run(seed);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", checks.len());
    let all = passed == checks.len();
    if let Some(path) = out {
        let report = SelftestReport {
            command: "kernels selftest",
            version: env!("CARGO_PKG_VERSION"),
            seed,
            passed: all,
            checks: &checks,
        };
        inputs::write_output(&path, &inputs::to_json(&report))?;
    }
    Ok(all)
}

fn dispatch(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Coherence { input, skeleton, partition, params, stats, out, seed, reps, strict, format } => {
            coherence::run_coherence(&coherence::CoherenceArgs {
                input,
                skeleton,
                partition,
                params,
                stats,
                out,
                seed,
                reps,
                strict,
                format,
            })?;
        }
        Command::BuildStats { corpus, skeleton, partition, params, out, format } => {
            coherence::run_build_stats(&coherence::BuildStatsArgs { corpus, skeleton, partition, params, out, format })?;
        }
        Command::Features { metric, gen, reference, reps, seed, out, top_k, pool_size, pairs, format } => {
            features::run_features(&features::FeaturesArgs {
                metric,
                gen,
                reference,
                reps,
                seed,
                out,
                top_k,
                pool_size,
                pairs,
                format,
            })?;
        }
        Command::Kernels { action: KernelsAction::Selftest { seed, out } } => return run_selftest(seed, out),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
