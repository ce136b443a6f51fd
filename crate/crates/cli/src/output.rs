use std::path::Path;

use anyhow::Context;
use goemax_core::config::ExperimentConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of the compact JSON form of the effective config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn header_lines(cfg: &ExperimentConfig) -> Vec<String> {
    vec![format!("config_sha256={} seed={}", config_hash(cfg), cfg.seed)]
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}
