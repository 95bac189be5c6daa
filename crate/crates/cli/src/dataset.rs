//! Grouped-CSV ingestion and emission.
//!
//! Layout: a header row, column 1 a group label, columns 2..p+1 numeric
//! features. Group order is first appearance in the file. Floats are written
//! with Rust's shortest round-trip formatting, so emit → ingest reproduces
//! the sample bit for bit.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use hdglht::GroupedSample;

use crate::error::{CliError, CliResult};

pub struct Dataset {
    pub labels: Vec<String>,
    pub sample: GroupedSample,
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::user(format!("cannot read dataset {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 {
        return Err(CliError::user(format!(
            "{}: header must have a group column plus at least one feature",
            path.display()
        )));
    }
    let p = headers.len() - 1;

    let mut labels: Vec<String> = Vec::new();
    let mut rows_by_group: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let line = record
            .position()
            .map(|pos| pos.line())
            .unwrap_or_default();
        if record.len() != p + 1 {
            return Err(CliError::user(format!(
                "{}: row {line}: expected {} fields, found {}",
                path.display(),
                p + 1,
                record.len()
            )));
        }
        let label = record.get(0).unwrap_or_default().trim().to_string();
        if label.is_empty() {
            return Err(CliError::user(format!(
                "{}: row {line}: empty group label",
                path.display()
            )));
        }
        let mut values = Vec::with_capacity(p);
        for (idx, field) in record.iter().skip(1).enumerate() {
            let trimmed = field.trim();
            if trimmed.is_empty() {
                return Err(CliError::user(format!(
                    "{}: row {line}, column {}: missing value",
                    path.display(),
                    idx + 2
                )));
            }
            let value: f64 = trimmed.parse().map_err(|_| {
                CliError::user(format!(
                    "{}: row {line}, column {}: invalid numeric value '{trimmed}'",
                    path.display(),
                    idx + 2
                ))
            })?;
            values.push(value);
        }
        if !rows_by_group.contains_key(&label) {
            labels.push(label.clone());
        }
        rows_by_group.entry(label).or_default().push(values);
    }

    if labels.len() < 2 {
        return Err(CliError::user(format!(
            "{}: need at least 2 distinct groups, found {}",
            path.display(),
            labels.len()
        )));
    }
    for label in &labels {
        let n = rows_by_group[label].len();
        if n < 4 {
            return Err(CliError::user(format!(
                "{}: group '{label}' has only {n} rows; at least 4 are required",
                path.display()
            )));
        }
    }

    let mut groups = Vec::with_capacity(labels.len());
    for label in &labels {
        let rows = &rows_by_group[label];
        let n = rows.len();
        let mut data = Vec::with_capacity(n * p);
        for row in rows {
            data.extend_from_slice(row);
        }
        let g = Array2::from_shape_vec((n, p), data)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        groups.push(g);
    }
    let sample = GroupedSample::new(groups)?;
    Ok(Dataset { labels, sample })
}

pub fn write_dataset(path: &Path, labels: &[String], sample: &GroupedSample) -> CliResult<()> {
    let p = sample.p();
    let mut out = String::from("group");
    for j in 1..=p {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (alpha, label) in labels.iter().enumerate() {
        for row in sample.group(alpha).rows() {
            out.push_str(label);
            for v in row.iter() {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))
}
