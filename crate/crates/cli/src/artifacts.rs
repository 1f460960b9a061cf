//! Artifact files a run directory accumulates, and their shapes on disk.
//!
//! Every JSON artifact embeds the fingerprint of the configuration that
//! produced it, wrapped around the engine's own record types rather than
//! spliced into them, so the engine-level shapes stay exactly what the
//! library serializes. Serialization is deterministic: rewriting an artifact
//! from the same inputs reproduces it byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use kernelga::ga::SearchReport;
use kernelga::trainer::EvaluationRecord;
use kernelga::{Error, Result};

/// Search outcome artifact (`search-report.json`).
pub const SEARCH_REPORT_FILE: &str = "search-report.json";
/// Per-evaluation JSON-lines log (`evaluations.jsonl`).
pub const EVALUATION_LOG_FILE: &str = "evaluations.jsonl";
/// Side-by-side summary artifact (`comparison.json`).
pub const COMPARISON_FILE: &str = "comparison.json";
/// Copy of the best evolved model's checkpoint (`best-model.kga1`).
pub const BEST_MODEL_FILE: &str = "best-model.kga1";

/// Fixed-kernel baseline artifact for kernel size `k`.
pub fn baseline_file(k: u8) -> String {
    format!("baseline-k{k}.json")
}

/// `search-report.json`: the search report plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StampedReport {
    pub config_fingerprint: String,
    pub report: SearchReport,
}

/// `baseline-k*.json` and each `evaluations.jsonl` line: one evaluation plus
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StampedRecord {
    pub config_fingerprint: String,
    pub record: EvaluationRecord,
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRow {
    pub label: String,
    pub genome: String,
    pub fitness: f64,
}

/// `comparison.json`: evolved result set against the fixed-kernel baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonReport {
    pub config_fingerprint: String,
    pub rows: Vec<ComparisonRow>,
}

/// Writes a JSON artifact with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::data(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

/// Reads a JSON artifact.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Appends one stamped evaluation record to the JSON-lines log.
pub fn append_stamped_record(path: &Path, stamped: &StampedRecord) -> Result<()> {
    let mut line = serde_json::to_string(stamped)
        .map_err(|e| Error::data(format!("cannot serialize log record: {e}")))?;
    line.push('\n');
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    file.write_all(line.as_bytes())
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

/// Renders the comparison as an aligned text table.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let label_width = rows
        .iter()
        .map(|r| r.label.len())
        .chain(["configuration".len()])
        .max()
        .unwrap_or(0);
    let genome_width = rows
        .iter()
        .map(|r| r.genome.len())
        .chain(["genome".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:label_width$}  {:genome_width$}  fitness",
        "configuration", "genome"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:label_width$}  {:genome_width$}  {:.4}",
            row.label, row.genome, row.fitness
        );
    }
    out
}
