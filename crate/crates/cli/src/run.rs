//! Machine-readable record of one invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool_version: &'static str,
    pub command: &'a str,
    pub argv: Vec<String>,
    /// SHA-256 of the effective configuration serialized as JSON.
    pub config_hash: String,
    pub config: &'a PipelineConfig,
    pub seeds: BTreeMap<&'static str, u64>,
    pub jobs: usize,
    pub deterministic: bool,
    pub outputs: Vec<PathBuf>,
    pub started_unix: u64,
}

pub fn config_hash(cfg: &PipelineConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn write(path: &Path, manifest: &RunManifest<'_>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}
