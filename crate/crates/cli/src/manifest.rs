use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Record of one command invocation: resolved config, inputs/outputs, and
/// digests of every artifact. Written before exit on success *and* failure.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config_path: Option<String>,
    pub data_dir: Option<String>,
    pub out_dir: Option<String>,
    pub resolved_config: Option<RunConfig>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub status: String,
    pub exit_code: i32,
    pub artifacts: Vec<ArtifactDigest>,
}

#[derive(Serialize)]
pub struct ArtifactDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

pub fn digest_file(path: &Path) -> Option<ArtifactDigest> {
    let data = std::fs::read(path).ok()?;
    let mut hasher = Sha256::new();
    hasher.update(&data);
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Some(ArtifactDigest {
        path: path.display().to_string(),
        bytes: data.len() as u64,
        sha256: hex,
    })
}

/// Write the manifest into the run's output directory, falling back to the
/// working directory when that is not writable.
pub fn write_manifest(manifest: &RunManifest, out_dir: Option<&Path>) -> Option<PathBuf> {
    let json = serde_json::to_string_pretty(manifest).ok()?;
    let candidates: Vec<PathBuf> = match out_dir {
        Some(dir) => vec![dir.join("run_manifest.json"), PathBuf::from("run_manifest.json")],
        None => vec![PathBuf::from("run_manifest.json")],
    };
    for path in candidates {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                let _ = std::fs::create_dir_all(parent);
            }
        }
        if std::fs::write(&path, &json).is_ok() {
            return Some(path);
        }
    }
    None
}
