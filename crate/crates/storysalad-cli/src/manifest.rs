//! Run manifests: one JSON file written next to each command's primary
//! output, sufficient to reproduce the run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{input, Result};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_ms: u128,
}

pub fn manifest_path(primary_out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", primary_out.display()))
}

/// Builds and writes the manifest beside `primary_out`, stamping elapsed
/// wall-clock time from `started`.
pub fn write_manifest(
    primary_out: &Path,
    command: &str,
    config: serde_json::Value,
    seeds: Vec<u64>,
    inputs: &[&Path],
    outputs: &[&Path],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        seeds,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_ms: started.elapsed().as_millis(),
    };
    let path = manifest_path(primary_out);
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| input(format!("cannot serialize manifest: {e}")))?;
    std::fs::write(&path, text + "\n")
        .map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}
