//! Running an experiment to disk and describing what was written.

use crate::config::{check_config, ExperimentConfig};
use crate::error::Result;
use crate::experiments::{Outcome, StreamUse};
use crate::registry;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    /// SHA-256 of the canonical config JSON framed as a git blob.
    pub input_hash: String,
    pub outputs: Vec<OutputFile>,
    pub wall_clock_seconds: f64,
    pub rng_streams: Vec<StreamUse>,
    pub results: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// `sha256("blob <len>\0" + content)`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

/// Validates, runs and computes without writing anything.
pub fn compute(config: &ExperimentConfig) -> Result<(Outcome, Vec<String>)> {
    let warnings = check_config(config)?;
    let entry = registry::lookup(&config.experiment)?;
    Ok(((entry.run)(config)?, warnings))
}

/// Runs the configured experiment, writing one CSV per table and
/// `manifest.json` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let (outcome, warnings) = compute(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let mut outputs = Vec::new();
    for t in &outcome.tables {
        let csv = t.to_csv();
        fs::write(config.output_dir.join(&t.file), &csv)?;
        outputs.push(OutputFile { file: t.file.clone(), sha256: sha256_hex(csv.as_bytes()), rows: t.rows.len() });
    }
    let manifest = RunManifest {
        config: config.clone(),
        input_hash: content_hash(config.to_json().as_bytes()),
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        rng_streams: outcome.streams,
        results: outcome.summary,
        warnings,
        notes: outcome.notes,
    };
    fs::write(config.output_dir.join("manifest.json"), manifest.to_json())?;
    Ok(manifest)
}
