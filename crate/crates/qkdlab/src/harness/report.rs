//! Report rows and deterministic CSV / JSON emission.
//!
//! Floats are rendered with the shortest round-trip representation, so two
//! runs with the same config and seed produce byte-identical files.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::config::ReportFormat;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One metric value; bools stay bools in JSON and render as true/false in CSV.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(untagged)]
pub enum MetricValue {
    Float(f64),
    Int(u64),
    Bool(bool),
}

impl MetricValue {
    /// Bit-exact equality (floats compared by representation).
    pub fn same_as(&self, other: &MetricValue) -> bool {
        match (self, other) {
            (MetricValue::Float(a), MetricValue::Float(b)) => a.to_bits() == b.to_bits(),
            (MetricValue::Int(a), MetricValue::Int(b)) => a == b,
            (MetricValue::Bool(a), MetricValue::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Float(v) => write!(f, "{v}"),
            MetricValue::Int(v) => write!(f, "{v}"),
            MetricValue::Bool(v) => write!(f, "{v}"),
        }
    }
}

/// One row of an experiment report. `stream` is the base substream id of the
/// trial (`trial * 4`); together with `seed` it pins the exact randomness.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub experiment: String,
    pub trial: u64,
    pub seed: u64,
    pub stream: u64,
    pub metrics: Vec<(&'static str, MetricValue)>,
}

impl ReportRow {
    pub fn new(experiment: &str, trial: u64, seed: u64) -> Self {
        ReportRow {
            experiment: experiment.to_string(),
            trial,
            seed,
            stream: trial * 4,
            metrics: Vec::new(),
        }
    }

    pub fn float(mut self, name: &'static str, value: f64) -> Self {
        self.metrics.push((name, MetricValue::Float(value)));
        self
    }

    pub fn int(mut self, name: &'static str, value: u64) -> Self {
        self.metrics.push((name, MetricValue::Int(value)));
        self
    }

    pub fn bool(mut self, name: &'static str, value: bool) -> Self {
        self.metrics.push((name, MetricValue::Bool(value)));
        self
    }

    pub fn metric(&self, name: &str) -> Option<MetricValue> {
        self.metrics
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }

    fn to_json(&self) -> serde_json::Value {
        // serde_json maps are sorted by key, which keeps output deterministic.
        let mut map = serde_json::Map::new();
        map.insert("version".into(), ARTIFACT_VERSION.into());
        map.insert("experiment".into(), self.experiment.clone().into());
        map.insert("trial".into(), self.trial.into());
        map.insert("seed".into(), self.seed.into());
        map.insert("stream".into(), self.stream.into());
        let mut metrics = serde_json::Map::new();
        for (name, value) in &self.metrics {
            metrics.insert((*name).into(), serde_json::to_value(value).unwrap());
        }
        map.insert("metrics".into(), metrics.into());
        map.into()
    }
}

/// Write the per-row reports; returns the file names created.
pub fn write_reports(
    dir: &Path,
    experiment: &str,
    rows: &[ReportRow],
    format: ReportFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        let path = dir.join(format!("{experiment}.csv"));
        write_csv(&path, rows)?;
        files.push(path);
    }
    if matches!(format, ReportFormat::Json | ReportFormat::Both) {
        let path = dir.join(format!("{experiment}.json"));
        let values: Vec<serde_json::Value> = rows.iter().map(ReportRow::to_json).collect();
        std::fs::write(&path, serde_json::to_string_pretty(&values)? + "\n")?;
        files.push(path);
    }
    Ok(files)
}

fn write_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![
        "version".to_string(),
        "experiment".to_string(),
        "trial".to_string(),
        "seed".to_string(),
        "stream".to_string(),
    ];
    if let Some(first) = rows.first() {
        header.extend(first.metrics.iter().map(|(n, _)| n.to_string()));
    }
    writer.write_record(&header)?;
    for row in rows {
        let mut record = vec![
            ARTIFACT_VERSION.to_string(),
            row.experiment.clone(),
            row.trial.to_string(),
            row.seed.to_string(),
            row.stream.to_string(),
        ];
        record.extend(row.metrics.iter().map(|(_, v)| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

impl From<csv::Error> for crate::Error {
    fn from(e: csv::Error) -> Self {
        crate::Error::Config(format!("CSV error: {e}"))
    }
}

/// Suite-level result, serialized as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub artifact_version: String,
    pub experiment: String,
    pub seed: u64,
    pub trials: u64,
    pub tolerances: super::config::Tolerances,
    pub pass: bool,
    pub failures: Vec<String>,
    pub report_files: Vec<String>,
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(path)
}
