//! Loading inputs and writing reports.

use std::fs;
use std::path::{Path, PathBuf};

use party_eval_core::motion::{
    default_partition, parse_motion, MotionDefaults, MotionFormat, MotionSequence, PartitionMap,
};
use party_eval_core::temporal::CoherenceParams;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

/// A motion file found in an input directory. `id` is the file stem.
#[derive(Debug, Clone)]
pub struct MotionFile {
    pub id: String,
    pub name: String,
    pub path: PathBuf,
    pub format: MotionFormat,
}

/// Motion files directly inside `dir`, sorted by name. Files with other
/// extensions are ignored.
pub fn list_motion_files(dir: &Path) -> Result<Vec<MotionFile>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Failure::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !path.is_file() {
            continue;
        }
        let format = path
            .extension()
            .and_then(|e| e.to_str())
            .and_then(MotionFormat::from_extension);
        let (Some(format), Some(stem)) = (format, path.file_stem()) else {
            log::debug!("ignoring {}", path.display());
            continue;
        };
        files.push(MotionFile { id: stem.to_string_lossy().into_owned(), name, path, format });
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));
    for w in files.windows(2) {
        if w[0].id == w[1].id {
            return Err(Failure::invalid(format!("{} and {} share the id `{}`", w[0].name, w[1].name, w[0].id)));
        }
    }
    if files.is_empty() {
        return Err(Failure::invalid(format!("{}: no .json or .csv motion files", dir.display())));
    }
    Ok(files)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|_| Failure::invalid(format!("{}: not UTF-8 text", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses one motion file and checks it against the expected skeleton.
pub fn load_motion(file: &MotionFile, bytes: &[u8], skeleton: &str) -> Result<MotionSequence, Failure> {
    let defaults = MotionDefaults { skeleton_id: skeleton.to_string(), ..MotionDefaults::default() };
    let seq = parse_motion(bytes, file.format, &defaults).map_err(|e| Failure::core(&file.path, e))?;
    if seq.skeleton_id() != skeleton {
        return Err(Failure::invalid(format!(
            "{}: skeleton `{}` but --skeleton is `{skeleton}`",
            file.path.display(),
            seq.skeleton_id()
        )));
    }
    Ok(seq)
}

/// Where the partition came from, plus the resolved map as written to reports.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionInfo {
    pub source: String,
    pub map: serde_json::Value,
}

pub fn load_partition(skeleton: &str, path: Option<&Path>) -> Result<(PartitionMap, PartitionInfo), Failure> {
    let (map, source) = match path {
        Some(p) => {
            let map = PartitionMap::from_override_json(&read_text(p)?).map_err(|e| Failure::core(p, e))?;
            (map, p.display().to_string())
        }
        None => {
            let map = default_partition(skeleton).map_err(|e| {
                Failure::invalid(format!("{e}; custom skeletons need --partition"))
            })?;
            (map, "builtin".to_string())
        }
    };
    let value = serde_json::from_str(&map.to_override_json()).expect("partition JSON round-trips");
    Ok((map, PartitionInfo { source, map: value }))
}

/// Skeleton defaults, overridden key by key by the params file when given.
pub fn load_params(skeleton: &str, path: Option<&Path>) -> Result<CoherenceParams, Failure> {
    let base = CoherenceParams::for_skeleton(skeleton);
    match path {
        Some(p) => CoherenceParams::from_json_over(&read_text(p)?, &base).map_err(|e| Failure::core(p, e)),
        None => Ok(base),
    }
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports contain only finite numbers");
    s.push('\n');
    s
}
