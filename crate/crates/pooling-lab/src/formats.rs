//! Artifact schemas and IO helpers.
//!
//! Every JSON artifact carries the tool version and the effective config it
//! was produced under; serialization is deterministic so identical inputs
//! give byte-identical files. CSV is reserved for the tidy sweep table.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use pooling_core::engine::TraceEvent;
use pooling_core::instance::Instance;
use pooling_core::metrics::{RunMetrics, SweepConfig, SweepReport};
use pooling_core::policies::PriceTable;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub version: String,
    pub config: Value,
    pub instance: Instance,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    pub version: String,
    pub config: Value,
    pub policy: String,
    pub metrics: RunMetrics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DualsFile {
    pub version: String,
    pub config: Value,
    pub objective: f64,
    pub duals: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableFile {
    pub version: String,
    pub config: Value,
    pub table: PriceTable,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepFile {
    pub version: String,
    pub config: SweepConfig,
    pub report: SweepReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRow {
    pub gamma: f64,
    pub mean_total_reward: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TuneFile {
    pub version: String,
    pub config: Value,
    pub gamma_star: f64,
    pub scores: Vec<ScoreRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyRow {
    pub check: String,
    pub instance: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
    pub advisory: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyFile {
    pub version: String,
    pub config: Value,
    pub pass: bool,
    pub checks: Vec<VerifyRow>,
}

/// Serializes pretty JSON with a trailing newline to a file, or stdout when
/// no path is given.
pub fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => {
            let mut f = BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            writeln!(f, "{body}")?;
            f.flush()?;
        }
        None => println!("{body}"),
    }
    Ok(())
}

/// Accepts both the wrapped artifact and a bare instance object.
pub fn load_instance(path: &Path) -> Result<Instance> {
    let raw =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(file) = serde_json::from_str::<InstanceFile>(&raw) {
        return Ok(file.instance);
    }
    serde_json::from_str::<Instance>(&raw)
        .with_context(|| format!("{} is not an instance file", path.display()))
}

pub fn load_table(path: &Path) -> Result<PriceTable> {
    let raw =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: TableFile = serde_json::from_str(&raw)
        .with_context(|| format!("{} is not a price table file", path.display()))?;
    Ok(file.table)
}

/// One JSON object per line, in event order.
pub fn write_trace(path: &Path, trace: &[TraceEvent]) -> Result<()> {
    let mut f =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for event in trace {
        writeln!(f, "{}", serde_json::to_string(event)?)?;
    }
    f.flush()?;
    Ok(())
}

/// Tidy CSV with the fixed column contract.
pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "policy",
        "density_or_window",
        "metric",
        "mean",
        "std",
        "n_seeds",
    ])?;
    for row in &report.rows {
        w.write_record([
            row.policy.as_str(),
            &row.density_or_window.to_string(),
            &row.metric,
            &row.mean.to_string(),
            &row.std.to_string(),
            &row.n_seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Resolved output destinations for commands that default to stdout.
pub fn out_path(out: &Option<PathBuf>) -> Option<&Path> {
    out.as_deref()
}
