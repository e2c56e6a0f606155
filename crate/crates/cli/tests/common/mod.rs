//! Fixture builders and a runner for the `party-eval` binary.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use party_eval_core::embedding::{EmbeddingRecord, EmbeddingSet};
use party_eval_core::motion::{default_partition, MotionSequence, HUMANML3D_22};
use party_eval_core::synth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const BIN: &str = env!("CARGO_BIN_EXE_party-eval");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("PARTY_EVAL_LOG").output().expect("binary runs")
}

pub fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN).args(args).env(key, value).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

pub fn write_motion(dir: &Path, name: &str, seq: &MotionSequence) -> PathBuf {
    let path = dir.join(name);
    let text = if name.ends_with(".csv") { seq.to_csv_string() } else { seq.to_json_string() };
    fs::write(&path, text).unwrap();
    path
}

/// `n` jittered rest-pose sequences of 40 frames.
pub fn write_corpus(dir: &Path, n: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let seq = synth::jittered_rest_sequence(HUMANML3D_22, 40, 0.03, &mut rng).unwrap();
        write_motion(dir, &format!("ref{i:03}.json"), &seq);
    }
}

/// Three sequences: a phase-locked chirp, a random walk (as CSV) and a
/// jittered rest pose.
pub fn write_eval_set(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let partition = default_partition(HUMANML3D_22).unwrap();
    let chirp = synth::phase_locked(HUMANML3D_22, &partition, &synth::chirp_profile(120)).unwrap();
    write_motion(dir, "a_chirp.json", &chirp);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let walk = synth::random_walk(HUMANML3D_22, 22, 80, &mut rng).unwrap();
    write_motion(dir, "b_walk.csv", &walk);
    let rest = synth::jittered_rest_sequence(HUMANML3D_22, 60, 0.03, &mut rng).unwrap();
    write_motion(dir, "c_rest.json", &rest);
}

fn normal_vec(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Paired text/motion embeddings with group keys, `groups` groups of four.
pub fn write_embeddings(path: &Path, groups: usize, dim: usize, offset: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for g in 0..groups {
        let text = normal_vec(dim, &mut rng);
        for k in 0..4 {
            let motion: Vec<f64> = text.iter().map(|x| x + offset + 0.5 * rng.random::<f64>()).collect();
            records.push(EmbeddingRecord {
                id: format!("s{g:03}_{k}"),
                vector: motion.clone(),
                text_vec: Some(text.clone()),
                motion_vec: Some(motion),
                group_key: Some(format!("prompt{g:03}")),
            });
        }
    }
    fs::write(path, EmbeddingSet::new(records).unwrap().to_jsonl()).unwrap();
}

/// Temp dir holding a corpus, stats built from it and an evaluation set.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        write_corpus(&ws.path("corpus"), 20, 77);
        write_eval_set(&ws.path("eval"));
        let out = run(&["build-stats", "--corpus", p(&ws.path("corpus")), "--skeleton", HUMANML3D_22, "--out", p(&ws.path("stats.json"))]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        ws
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn coherence(&self, input: &str, out: &str, extra: &[&str]) -> Output {
        let (input, stats, out) = (self.path(input), self.path("stats.json"), self.path(out));
        let mut args = vec!["coherence", "--input", p(&input), "--skeleton", HUMANML3D_22, "--stats", p(&stats), "--out", p(&out)];
        args.extend_from_slice(extra);
        run(&args)
    }
}
