//! Dataset ingestion and result serialization.
//!
//! The dataset format is one observation per CSV row: a group label column
//! followed by m value columns. Groups are ordered by first appearance of
//! their label. Values round-trip bit-exactly through 17-significant-digit
//! decimal serialization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::TestReport;
use crate::sample::GroupedSample;
use crate::space::{GridDomain, GridFunction};

/// Read a grouped functional dataset; the domain comes from the caller
/// (CLI flags), defaulting to [0, 1].
pub fn read_dataset_csv(path: &Path, a: f64, b: f64) -> Result<(GroupedSample, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header_len = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: header: {e}", path.display())))?
        .len();
    if header_len < 2 {
        return Err(Error::Data(format!(
            "{}: need a label column plus at least one value column",
            path.display()
        )));
    }
    let m = header_len - 1;
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<Vec<f64>>> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Data(format!("{}: row {row}: {e}", path.display())))?;
        if record.len() != header_len {
            return Err(Error::Data(format!(
                "{}: row {row} has {} columns, expected {header_len}",
                path.display(),
                record.len()
            )));
        }
        let label = record.get(0).unwrap().trim().to_string();
        let mut values = Vec::with_capacity(m);
        for (col, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {row}, column {}: non-numeric value {cell:?}",
                    path.display(),
                    col + 1
                ))
            })?;
            values.push(v);
        }
        let g = match labels.iter().position(|l| l == &label) {
            Some(g) => g,
            None => {
                labels.push(label);
                groups.push(Vec::new());
                groups.len() - 1
            }
        };
        groups[g].push(values);
    }
    if labels.len() < 2 {
        return Err(Error::Data(format!(
            "{}: found {} group label(s); K >= 2 required",
            path.display(),
            labels.len()
        )));
    }
    let domain = GridDomain::new(a, b, m)?;
    let sample = GroupedSample::new(
        groups
            .into_iter()
            .map(|g| g.into_iter().map(|values| GridFunction { domain, values }).collect())
            .collect(),
    )?;
    Ok((sample, labels))
}

/// Write a grouped sample in the same format, labels taken positionally.
pub fn write_dataset_csv(
    path: &Path,
    sample: &GroupedSample,
    labels: &[String],
) -> Result<()> {
    if labels.len() != sample.k() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} groups",
            labels.len(),
            sample.k()
        )));
    }
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let m = sample.domain.m;
    let mut header = vec!["group".to_string()];
    header.extend((0..m).map(|i| format!("t{i}")));
    writer.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (g, group) in sample.groups.iter().enumerate() {
        for x in group {
            let mut row = vec![labels[g].clone()];
            row.extend(x.values.iter().map(|v| format!("{v:.17e}")));
            writer.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
        }
    }
    writer.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown format {other}; use json or csv"))),
        }
    }
}

/// Render test reports; JSON keeps the full structure, CSV the summary
/// columns.
pub fn render_reports(reports: &[TestReport], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(reports).map_err(|e| Error::Data(e.to_string())),
        ReportFormat::Csv => {
            let mut out = String::from("test,statistic,p_value,method,replicates\n");
            for r in reports {
                out.push_str(&format!(
                    "{},{:.17e},{:.17e},{},{}\n",
                    r.test, r.statistic, r.p_value, r.method, r.replicates
                ));
            }
            Ok(out)
        }
    }
}

pub fn write_report(reports: &[TestReport], path: &Path, format: ReportFormat) -> Result<()> {
    let text = render_reports(reports, format)?;
    std::fs::write(path, text).map_err(Error::from)
}

/// Everything needed to re-run an invocation bit-identically; the wall
/// clock is informational only and excluded from determinism contracts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> RunManifest {
        RunManifest {
            version: crate::VERSION.to_string(),
            command: command.to_string(),
            seed,
            config: BTreeMap::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))
    }
}
