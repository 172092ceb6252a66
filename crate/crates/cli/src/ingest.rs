//! CSV ingestion and emission of datasets.
//!
//! The header names the outcome `y`, treatment `z`, observance indicators `r`
//! and `s`, and the covariates. A missing outcome is an empty `y` cell.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use wqte_core::{validate_dataset, Dataset, ObservedRecord};

use crate::error::{CliError, CliResult};

pub const ROLES: [&str; 4] = ["y", "z", "r", "s"];

/// Column mapping: which header column plays each role, and which columns are covariates.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Schema {
    /// Role (`y`, `z`, `r`, `s`) to header column; unmapped roles use their own name.
    pub map: BTreeMap<String, String>,
    /// Covariate columns in order; `None` takes every other column in header order.
    pub covariates: Option<Vec<String>>,
}

impl Schema {
    /// Parses `role=column` pairs separated by commas.
    pub fn parse_map(spec: &str) -> CliResult<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (role, column) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Mapping(format!("expected role=column, got `{pair}`")))?;
            let (role, column) = (role.trim(), column.trim());
            if !ROLES.contains(&role) {
                return Err(CliError::Mapping(format!("unknown role `{role}`; expected one of y, z, r, s")));
            }
            if map.insert(role.to_string(), column.to_string()).is_some() {
                return Err(CliError::Mapping(format!("role `{role}` mapped twice")));
            }
        }
        Ok(map)
    }

    fn column_for(&self, role: &str) -> String {
        self.map.get(role).cloned().unwrap_or_else(|| role.to_string())
    }
}

/// A dataset read from disk together with its provenance.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub covariates: Vec<String>,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Layout {
    y: usize,
    z: usize,
    r: usize,
    s: usize,
    x: Vec<usize>,
    names: Vec<String>,
}

fn layout(header: &csv::StringRecord, schema: &Schema) -> CliResult<Layout> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    for (i, c) in cols.iter().enumerate() {
        if cols[..i].contains(c) {
            return Err(CliError::Mapping(format!("duplicate header column `{c}`")));
        }
    }
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Mapping(format!("column `{name}` not found in header")))
    };
    let [y, z, r, s] = ROLES.map(|role| find(&schema.column_for(role)));
    let (y, z, r, s) = (y?, z?, r?, s?);
    let x = match &schema.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<CliResult<Vec<_>>>()?,
        None => (0..cols.len()).filter(|i| ![y, z, r, s].contains(i)).collect(),
    };
    for &j in &x {
        if [y, z, r, s].contains(&j) {
            return Err(CliError::Mapping(format!("column `{}` cannot be both a role and a covariate", cols[j])));
        }
    }
    let names = x.iter().map(|&j| cols[j].to_string()).collect();
    Ok(Layout { y, z, r, s, x, names })
}

fn indicator(cell: &str, row: usize, column: &str) -> CliResult<bool> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(CliError::Cell { row, column: column.into(), message: format!("expected 0 or 1, got `{cell}`") }),
    }
}

fn number(cell: &str, row: usize, column: &str) -> CliResult<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Cell { row, column: column.into(), message: format!("expected a finite number, got `{cell}`") }),
    }
}

/// Parses CSV bytes into a dataset.
///
/// With `strict`, a `y` cell that is filled when `r + s = 0` or empty when
/// `r + s = 1` is a consistency error, as is any other dataset invariant
/// violation. Without it the records are returned as read so that they can
/// be reported on.
pub fn parse_csv(bytes: &[u8], schema: &Schema, strict: bool) -> CliResult<(Dataset, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader.headers().map_err(|e| CliError::Format(e.to_string()))?.clone();
    let lay = layout(&header, schema)?;
    let col = |j: usize| header.get(j).unwrap_or("").trim().to_string();
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| CliError::Format(format!("row {row}: {e}")))?;
        let cell = |j: usize| rec.get(j).unwrap_or("").trim();
        let z = indicator(cell(lay.z), row, &col(lay.z))?;
        let r = indicator(cell(lay.r), row, &col(lay.r))?;
        let s = indicator(cell(lay.s), row, &col(lay.s))?;
        let y = match cell(lay.y) {
            "" => None,
            v => Some(number(v, row, &col(lay.y))?),
        };
        if strict {
            if r && s {
                return Err(CliError::Consistency { row, message: "s=1 requires r=0".into() });
            }
            match (r || s, y.is_some()) {
                (false, true) => {
                    return Err(CliError::Consistency { row, message: "y must be empty when r=0 and s=0".into() })
                }
                (true, false) => {
                    return Err(CliError::Consistency { row, message: "y must be present when r+s=1".into() })
                }
                _ => {}
            }
        }
        let x = lay.x.iter().map(|&j| number(cell(j), row, &col(j))).collect::<CliResult<Vec<_>>>()?;
        records.push(ObservedRecord::new(y, z, x, r, s));
    }
    let d = Dataset::new(records, lay.x.len()).with_column_names(lay.names.clone());
    if strict {
        let report = validate_dataset(&d);
        if !report.is_valid() {
            return Err(wqte_core::Error::InvalidDataset(report.summary()).into());
        }
    }
    Ok((d, lay.names))
}

/// Reads and validates a dataset file.
pub fn ingest_csv(path: &Path, schema: &Schema) -> CliResult<Ingested> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    let (dataset, covariates) = parse_csv(&bytes, schema, true)?;
    Ok(Ingested { dataset, covariates, sha256: sha256_hex(&bytes) })
}

/// Writes `d` with header `y,z,r,s,<covariates>`. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(d: &Dataset, out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let names: Vec<String> = (0..d.p).map(|j| d.covariate_name(j)).collect();
    let mut header: Vec<&str> = ROLES.to_vec();
    header.extend(names.iter().map(String::as_str));
    let fmt_err = |e: csv::Error| CliError::Format(e.to_string());
    w.write_record(&header).map_err(fmt_err)?;
    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for rec in &d.records {
        let mut row = vec![rec.y.map(|v| v.to_string()).unwrap_or_default(), bit(rec.z), bit(rec.r), bit(rec.s)];
        row.extend(rec.x.iter().map(f64::to_string));
        w.write_record(&row).map_err(fmt_err)?;
    }
    w.flush().map_err(|e| CliError::Format(e.to_string()))
}
