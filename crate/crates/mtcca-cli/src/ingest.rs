//! CSV dataset ingestion.
//!
//! Files are RFC-4180-style, UTF-8, with a mandatory header row; every data
//! cell must parse as a finite number. Joint samples come either from two
//! files with equal row counts or from one file whose header names carry
//! `x:` / `y:` prefixes.

use std::path::Path;

use mtcca::PairedSample;
use nalgebra::DMatrix;

use crate::error::CliError;

/// A parsed numeric table: header labels plus row-major data.
pub struct NumericTable {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> Result<NumericTable, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let labels: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if labels.is_empty() {
        return Err(CliError::EmptyInput {
            path: path.display().to_string(),
        });
    }

    let mut rows = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if record.len() != labels.len() {
            return Err(CliError::Parse {
                path: path.display().to_string(),
                row: row_idx + 1,
                column: format!("(field count {} != {})", record.len(), labels.len()),
                message: "ragged row".into(),
            });
        }
        let mut row = Vec::with_capacity(labels.len());
        for (col_idx, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| CliError::Parse {
                path: path.display().to_string(),
                row: row_idx + 1,
                column: labels[col_idx].clone(),
                message: format!("cannot parse `{cell}` as a number"),
            })?;
            if !value.is_finite() {
                return Err(CliError::Parse {
                    path: path.display().to_string(),
                    row: row_idx + 1,
                    column: labels[col_idx].clone(),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::EmptyInput {
            path: path.display().to_string(),
        });
    }
    Ok(NumericTable { labels, rows })
}

fn to_matrix(table: &NumericTable) -> DMatrix<f64> {
    DMatrix::from_fn(table.rows.len(), table.labels.len(), |i, j| {
        table.rows[i][j]
    })
}

/// Joint sample from two files: X columns from the first, Y from the second.
pub fn ingest_csv_pair(path_x: &Path, path_y: &Path) -> Result<PairedSample, CliError> {
    let tx = read_table(path_x)?;
    let ty = read_table(path_y)?;
    if tx.rows.len() != ty.rows.len() {
        return Err(CliError::RowCountMismatch {
            x_rows: tx.rows.len(),
            y_rows: ty.rows.len(),
        });
    }
    PairedSample::new(to_matrix(&tx), to_matrix(&ty), tx.labels, ty.labels)
        .map_err(CliError::Module)
}

/// Joint sample from one file whose header names are prefixed `x:` or `y:`
/// to assign columns to the two blocks.
pub fn ingest_csv_split(path: &Path) -> Result<PairedSample, CliError> {
    let table = read_table(path)?;
    let mut x_cols = Vec::new();
    let mut y_cols = Vec::new();
    for (j, label) in table.labels.iter().enumerate() {
        if let Some(name) = label.strip_prefix("x:") {
            x_cols.push((j, name.to_string()));
        } else if let Some(name) = label.strip_prefix("y:") {
            y_cols.push((j, name.to_string()));
        } else {
            return Err(CliError::Parse {
                path: path.display().to_string(),
                row: 0,
                column: label.clone(),
                message: "single-file input requires `x:`/`y:` header prefixes".into(),
            });
        }
    }
    if x_cols.is_empty() || y_cols.is_empty() {
        return Err(CliError::EmptyInput {
            path: path.display().to_string(),
        });
    }
    let n = table.rows.len();
    let x = DMatrix::from_fn(n, x_cols.len(), |i, j| table.rows[i][x_cols[j].0]);
    let y = DMatrix::from_fn(n, y_cols.len(), |i, j| table.rows[i][y_cols[j].0]);
    PairedSample::new(
        x,
        y,
        x_cols.into_iter().map(|(_, name)| name).collect(),
        y_cols.into_iter().map(|(_, name)| name).collect(),
    )
    .map_err(CliError::Module)
}

/// Dispatch on the number of input paths: one file with prefixed headers or
/// an `(x, y)` pair.
pub fn ingest(inputs: &[String]) -> Result<PairedSample, CliError> {
    match inputs {
        [single] => ingest_csv_split(Path::new(single)),
        [x, y] => ingest_csv_pair(Path::new(x), Path::new(y)),
        _ => Err(CliError::Usage(format!(
            "analyze expects one or two CSV paths, got {}",
            inputs.len()
        ))),
    }
}
