//! CSV observational data: RFC-4180 with a header row, '.' decimal
//! separator. Rows with missing or unparseable numeric fields are dropped
//! and counted; treatment values other than 0/1 are a schema error.

use crate::CliError;
use exqte_core::Sample;
use std::path::{Path, PathBuf};

pub struct CsvDataset {
    pub sample: Sample,
    pub dropped_rows: usize,
    pub path: PathBuf,
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
}

fn parse_field(raw: &str) -> Option<f64> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return None;
    }
    match trimmed {
        "NA" | "na" | "NaN" | "nan" | "NULL" | "null" => None,
        _ => trimmed.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

pub fn read_csv_dataset(
    path: &Path,
    outcome: &str,
    treatment: &str,
    covariates: &[String],
) -> Result<CsvDataset, CliError> {
    if covariates.is_empty() {
        return Err(CliError::usage("at least one covariate column is required"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::usage(format!("cannot read header row: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::usage(format!("column '{name}' not found in {}", path.display())))
    };
    let y_idx = col(outcome)?;
    let d_idx = col(treatment)?;
    let x_idx: Vec<usize> = covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<_, _>>()?;

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut x = Vec::new();
    let mut dropped = 0usize;
    for (row_no, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::usage(format!("malformed CSV record: {e}")))?;
        let get = |idx: usize| record.get(idx).map(parse_field).unwrap_or(None);
        let yi = get(y_idx);
        let di = get(d_idx);
        let xi: Vec<Option<f64>> = x_idx.iter().map(|&i| get(i)).collect();
        let (Some(yi), Some(di)) = (yi, di) else {
            dropped += 1;
            continue;
        };
        if xi.iter().any(Option::is_none) {
            dropped += 1;
            continue;
        }
        let di = if di == 0.0 {
            0u8
        } else if di == 1.0 {
            1u8
        } else {
            return Err(CliError::usage(format!(
                "treatment column '{treatment}' must contain only 0 and 1; row {} has {di}",
                row_no + 2
            )));
        };
        y.push(yi);
        d.push(di);
        x.extend(xi.into_iter().flatten());
    }
    if y.is_empty() {
        return Err(CliError::usage(format!(
            "no usable rows in {} after dropping {dropped} incomplete rows",
            path.display()
        )));
    }
    let sample = Sample::new(y, d, x, covariates.len())
        .map_err(|e| CliError::usage(format!("invalid data: {e}")))?;
    Ok(CsvDataset {
        sample,
        dropped_rows: dropped,
        path: path.to_path_buf(),
        outcome: outcome.to_string(),
        treatment: treatment.to_string(),
        covariates: covariates.to_vec(),
    })
}

/// Writes a sample as CSV with columns y, d, x1..xr. Floating-point
/// values use the shortest round-trip representation, so reading the file
/// back reproduces the sample exactly.
pub fn write_csv_dataset(sample: &Sample, path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    let mut header = vec!["y".to_string(), "d".to_string()];
    header.extend((1..=sample.covariate_dim()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(std::io::Error::other)?;
    for i in 0..sample.n() {
        let mut row = vec![sample.y()[i].to_string(), sample.d()[i].to_string()];
        row.extend(sample.x_row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(std::io::Error::other)?;
    }
    w.flush()
}
