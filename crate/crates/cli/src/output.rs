//! CSV and JSON artifacts.
//!
//! Every CSV embeds the artifact version and the full effective
//! configuration as `# key = value` header lines, so any data file can be
//! reproduced by feeding its own header back in as the config. Floats are
//! rendered with Rust's shortest round-trip formatting, which is
//! deterministic, so identical runs produce byte-identical files. The JSON
//! run summary carries the same configuration, per-point diagnostics, and
//! subcommand-specific results under a versioned schema.

use crate::config::{RunConfig, ARTIFACT_VERSION};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// One simulation point that could not be computed, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub at: f64,
    pub reason: String,
}

/// Versioned run summary written next to the CSV files.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub artifact_version: u32,
    pub subcommand: String,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub points_computed: usize,
    pub points_skipped: Vec<SkippedPoint>,
    pub results: serde_json::Value,
}

impl RunSummary {
    pub fn new(subcommand: &str, config: &RunConfig) -> Self {
        RunSummary {
            artifact_version: ARTIFACT_VERSION,
            subcommand: subcommand.to_string(),
            config: config.pairs().into_iter().collect(),
            outputs: Vec::new(),
            points_computed: 0,
            points_skipped: Vec::new(),
            results: serde_json::Value::Null,
        }
    }
}

/// Write one CSV table with the config echoed in the header.
pub fn write_csv(
    dir: &Path,
    name: &str,
    config: &RunConfig,
    columns: &[&str],
    rows: &[Vec<f64>],
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut buf = String::new();
    buf.push_str(&format!("# artifact_version = {ARTIFACT_VERSION}\n"));
    for line in config.echo().lines() {
        buf.push_str(&format!("# {line}\n"));
    }
    buf.push_str(&columns.join(","));
    buf.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        buf.push_str(&cells.join(","));
        buf.push('\n');
    }
    fs::write(&path, buf)?;
    Ok(path)
}

/// Write the JSON run summary.
pub fn write_summary(dir: &Path, name: &str, summary: &RunSummary) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, summary)?;
    file.write_all(b"\n")?;
    Ok(path)
}
