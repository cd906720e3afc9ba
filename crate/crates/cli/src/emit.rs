//! Deterministic CSV and JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Floats with 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table with a fixed header.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_bytes(&self) -> Result<Vec<u8>, Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::Io(format!("csv: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Failure::Io(format!("csv: {e}")))
    }
}

/// Where `--out` sends the artifacts.
pub struct Sink {
    summary: Option<PathBuf>,
    dir: Option<PathBuf>,
    prefix: String,
}

impl Sink {
    pub fn new(out: Option<&Path>) -> Result<Self, Failure> {
        let Some(out) = out else {
            return Ok(Sink { summary: None, dir: None, prefix: String::new() });
        };
        let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", out.display()));
        if out.extension().is_some_and(|e| e == "json") {
            let dir = out.parent().map(Path::to_path_buf).filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| ".".into());
            fs::create_dir_all(&dir).map_err(io)?;
            let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Sink { summary: Some(out.to_path_buf()), dir: Some(dir), prefix: format!("{stem}.") })
        } else {
            fs::create_dir_all(out).map_err(io)?;
            Ok(Sink { summary: Some(out.join("summary.json")), dir: Some(out.to_path_buf()), prefix: String::new() })
        }
    }

    pub fn table(&self, name: &str, t: &Table) -> Result<(), Failure> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{}{name}.csv", self.prefix));
            fs::write(&path, t.to_bytes()?).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    /// Prints the summary and writes it when an output path was given.
    pub fn summary(&self, v: &Value) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(v).expect("JSON values serialize");
        text.push('\n');
        print!("{text}");
        if let Some(path) = &self.summary {
            fs::write(path, &text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}
