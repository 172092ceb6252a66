//! Self-describing result artifacts.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "wqte";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

/// Embedded in every artifact so that it can be reproduced on its own.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub input: Option<InputInfo>,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &'static str, seed: Option<u64>, input: Option<InputInfo>, config: Value) -> Self {
        Self { tool: TOOL, version: VERSION, command, seed, input, config }
    }

    /// `#`-prefixed lines placed above a CSV table.
    fn csv_preamble(&self) -> String {
        let mut out = format!("# tool: {} {}\n# command: {}\n", self.tool, self.version, self.command);
        match self.seed {
            Some(s) => out.push_str(&format!("# seed: {s}\n")),
            None => out.push_str("# seed: none\n"),
        }
        if let Some(input) = &self.input {
            out.push_str(&format!("# input: {} sha256={}\n", input.path, input.sha256));
        }
        out.push_str(&format!("# config: {}\n", self.config));
        out
    }
}

/// A JSON document plus an optional flat CSV table.
pub struct Artifact {
    pub provenance: Provenance,
    pub result: Value,
    pub warnings: Vec<String>,
    pub table: Option<Table>,
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Formats an optional number, leaving the cell empty when absent.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Artifact {
    pub fn json(&self) -> String {
        let doc = serde_json::json!({
            "provenance": self.provenance,
            "warnings": self.warnings,
            "result": self.result,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
        s.push('\n');
        s
    }

    pub fn csv(&self) -> CliResult<Option<String>> {
        let Some(table) = &self.table else { return Ok(None) };
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |e: csv::Error| CliError::Format(e.to_string());
        w.write_record(&table.header).map_err(fmt)?;
        for row in &table.rows {
            w.write_record(row).map_err(fmt)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
        let mut out = self.provenance.csv_preamble();
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(Some(out))
    }

    /// Writes `<stem>.json` and `<stem>.csv`, where a trailing `.json` or
    /// `.csv` on `output` is dropped to form the stem. Without `output` the
    /// JSON goes to stdout. Returns the paths written.
    pub fn write(&self, output: Option<&Path>) -> CliResult<Vec<PathBuf>> {
        let Some(output) = output else {
            print!("{}", self.json());
            return Ok(Vec::new());
        };
        let stem = match output.extension().and_then(|e| e.to_str()) {
            Some("json") | Some("csv") => output.with_extension(""),
            _ => output.to_path_buf(),
        };
        if let Some(dir) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        }
        let mut written = Vec::new();
        let json_path = with_suffix(&stem, "json");
        std::fs::write(&json_path, self.json()).map_err(|e| CliError::io(json_path.display(), e))?;
        written.push(json_path);
        if let Some(csv) = self.csv()? {
            let csv_path = with_suffix(&stem, "csv");
            std::fs::write(&csv_path, csv).map_err(|e| CliError::io(csv_path.display(), e))?;
            written.push(csv_path);
        }
        Ok(written)
    }
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}
