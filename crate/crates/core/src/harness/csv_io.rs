//! CSV ingestion with pooled z-score standardization.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::PairedData;
use crate::error::{Error, Result};

/// Column layout of an input CSV.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Covariate columns; empty means every column except the response
    /// and group columns, in header order.
    pub x_cols: Vec<String>,
    pub y_col: String,
    /// Group column with values 1 and 2; required in single-file mode.
    pub group_col: Option<String>,
}

impl CsvSchema {
    pub fn grouped(y_col: &str, group_col: &str) -> Self {
        Self {
            x_cols: Vec::new(),
            y_col: y_col.to_string(),
            group_col: Some(group_col.to_string()),
        }
    }
}

/// Standardization applied to the loaded data: pooled mean and standard
/// deviation per covariate column and for the response. Constant columns
/// are centered and left at scale 1.
#[derive(Debug, Clone)]
pub struct Standardization {
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub constant_columns: Vec<String>,
}

struct RawTable {
    x_names: Vec<String>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    group: Vec<u8>,
}

fn parse_table(path: &Path, schema: &CsvSchema, fixed_group: Option<u8>) -> Result<RawTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::ParseError {
        row: 0,
        column: String::new(),
        message: format!("{e}"),
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ParseError {
            row: 0,
            column: String::new(),
            message: format!("{e}"),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::ParseError {
                row: 0,
                column: name.to_string(),
                message: "column not found in header".into(),
            })
    };
    let y_idx = find(&schema.y_col)?;
    let group_idx = match (&schema.group_col, fixed_group) {
        (Some(g), None) => Some(find(g)?),
        (_, Some(_)) => None,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "single-file loading needs a group column".into(),
            ))
        }
    };
    let x_idx: Vec<usize> = if schema.x_cols.is_empty() {
        (0..headers.len())
            .filter(|i| *i != y_idx && Some(*i) != group_idx)
            .collect()
    } else {
        schema
            .x_cols
            .iter()
            .map(|c| find(c))
            .collect::<Result<Vec<_>>>()?
    };
    if x_idx.is_empty() {
        return Err(Error::InvalidConfig("no covariate columns".into()));
    }

    let mut table = RawTable {
        x_names: x_idx.iter().map(|&i| headers[i].clone()).collect(),
        x: Vec::new(),
        y: Vec::new(),
        group: Vec::new(),
    };
    for (row_no, record) in reader.records().enumerate() {
        let row = row_no + 2; // header is line 1
        let record = record.map_err(|e| Error::ParseError {
            row,
            column: String::new(),
            message: format!("{e}"),
        })?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::ParseError {
                    row,
                    column: name.to_string(),
                    message: "missing field".into(),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::ParseError {
                    row,
                    column: name.to_string(),
                    message: format!("{e}"),
                })
        };
        let group = match (group_idx, fixed_group) {
            (Some(gi), _) => {
                let g = field(gi, schema.group_col.as_deref().unwrap_or("group"))?;
                if g == 1.0 {
                    1
                } else if g == 2.0 {
                    2
                } else {
                    return Err(Error::ParseError {
                        row,
                        column: schema.group_col.clone().unwrap_or_default(),
                        message: format!("group label must be 1 or 2, got {g}"),
                    });
                }
            }
            (None, Some(g)) => g,
            (None, None) => unreachable!(),
        };
        let xs: Vec<f64> = x_idx
            .iter()
            .map(|&i| field(i, &headers[i]))
            .collect::<Result<Vec<_>>>()?;
        table.x.push(xs);
        table.y.push(field(y_idx, &schema.y_col)?);
        table.group.push(group);
    }
    Ok(table)
}

fn standardize(mut table: RawTable, schema: &CsvSchema) -> Result<(PairedData, Standardization)> {
    let n = table.y.len();
    let n1 = table.group.iter().filter(|g| **g == 1).count();
    let n2 = n - n1;
    if n1 < 2 {
        return Err(Error::GroupMissing("1".into()));
    }
    if n2 < 2 {
        return Err(Error::GroupMissing("2".into()));
    }
    let p = table.x[0].len();
    let names = table.x_names.clone();

    let mut x_means = vec![0.0; p];
    let mut x_sds = vec![0.0; p];
    let mut constant_columns = Vec::new();
    for c in 0..p {
        let mean = table.x.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = table
            .x
            .iter()
            .map(|r| (r[c] - mean) * (r[c] - mean))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let sd = var.sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        if sd == 0.0 {
            constant_columns.push(names[c].clone());
        }
        for r in table.x.iter_mut() {
            r[c] = (r[c] - mean) / scale;
        }
        x_means[c] = mean;
        x_sds[c] = scale;
    }
    let y_mean = table.y.iter().sum::<f64>() / n as f64;
    let y_var = table
        .y
        .iter()
        .map(|v| (v - y_mean) * (v - y_mean))
        .sum::<f64>()
        / (n as f64 - 1.0);
    let y_sd = if y_var > 0.0 { y_var.sqrt() } else { 1.0 };
    if y_var == 0.0 {
        constant_columns.push(schema.y_col.clone());
    }
    for v in table.y.iter_mut() {
        *v = (*v - y_mean) / y_sd;
    }

    let collect = |label: u8| -> (DMatrix<f64>, DVector<f64>) {
        let idx: Vec<usize> = (0..n).filter(|&i| table.group[i] == label).collect();
        let x = DMatrix::from_fn(idx.len(), p, |r, c| table.x[idx[r]][c]);
        let y = DVector::from_fn(idx.len(), |r, _| table.y[idx[r]]);
        (x, y)
    };
    let (x1, y1) = collect(1);
    let (x2, y2) = collect(2);
    let data = PairedData::new(x1, y1, x2, y2)?;
    Ok((
        data,
        Standardization {
            x_means,
            x_sds,
            y_mean,
            y_sd,
            constant_columns,
        },
    ))
}

/// Loads a single CSV with a group column, standardizing covariates and
/// response by their pooled mean and standard deviation.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(PairedData, Standardization)> {
    let table = parse_table(path, schema, None)?;
    standardize(table, schema)
}

/// Loads the two populations from separate files sharing a schema (the
/// group column, if named, is ignored).
pub fn load_csv_pair(
    path1: &Path,
    path2: &Path,
    schema: &CsvSchema,
) -> Result<(PairedData, Standardization)> {
    let mut table = parse_table(path1, schema, Some(1))?;
    let second = parse_table(path2, schema, Some(2))?;
    if !second.x.is_empty() && second.x[0].len() != table.x.first().map_or(0, Vec::len) {
        return Err(Error::DimensionMismatch(
            "the two files carry different covariate counts".into(),
        ));
    }
    table.x.extend(second.x);
    table.y.extend(second.y);
    table.group.extend(second.group);
    standardize(table, schema)
}
