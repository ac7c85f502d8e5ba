//! CSV tables and run manifests.
//!
//! Reals are printed with 17 significant digits in scientific notation, which
//! round-trips every `f64` and keeps files byte-stable across runs.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::io::{write_file, Fingerprint};

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// A cell in a CSV row.
pub enum Cell {
    Int(u64),
    Real(f64),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

/// Comma-separated table with `\n` line endings and optional `#` comment lines.
#[derive(Debug, Default, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    /// Comment lines above the header.
    pub fn with_preamble(lines: &[String], header: &[&str]) -> Self {
        let mut csv = Self::new(header);
        let mut pre = String::new();
        for l in lines {
            let _ = writeln!(pre, "# {l}");
        }
        csv.text.insert_str(0, &pre);
        csv
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = Cell>) {
        let mut n = 0;
        for (i, c) in cells.into_iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Int(v) => {
                    let _ = write!(self.text, "{v}");
                }
                Cell::Real(v) => self.text.push_str(&real(v)),
            }
            n += 1;
        }
        debug_assert_eq!(n, self.columns, "row width");
        self.text.push('\n');
    }

    pub fn comment(&mut self, line: &str) {
        let _ = writeln!(self.text, "# {line}");
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to rerun a command, plus digests of what it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub params: Value,
    pub dataset: Option<DatasetRecord>,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds; the only field that differs between reruns.
    pub duration_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetRecord {
    pub spec: String,
    pub objects: usize,
    pub fingerprint: Fingerprint,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, params: Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            params,
            dataset: None,
            outputs: Vec::new(),
            duration_secs: 0.0,
        }
    }

    /// Writes `bytes` into `dir/name` and records its digest.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_file(&dir.join(name), bytes)?;
        let fp = Fingerprint::of([bytes]);
        self.outputs.push(OutputFile {
            path: name.into(),
            bytes: fp.bytes,
            sha256: fp.sha256,
        });
        Ok(())
    }

    /// Writes `dir/<command>.manifest.json`.
    pub fn finish(mut self, dir: &Path, elapsed: Duration) -> CliResult<()> {
        self.duration_secs = elapsed.as_secs_f64();
        let mut json = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
        json.push('\n');
        write_file(&dir.join(format!("{}.manifest.json", self.command)), json.as_bytes())
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Hex SHA-256 of a byte string; handy for comparing outputs in tests.
pub fn digest(bytes: &[u8]) -> String {
    Fingerprint::of([bytes]).sha256
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_have_seventeen_significant_digits() {
        assert_eq!(real(0.1), "1.0000000000000001e-1");
        assert_eq!(real(-2.0), "-2.0000000000000000e0");
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, 0.0] {
            assert_eq!(real(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::with_preamble(&["m=3".into()], &["k", "v"]);
        csv.row([Cell::from(1usize), Cell::from(0.5)]);
        csv.comment("slope=-1");
        assert_eq!(csv.as_str(), "# m=3\nk,v\n1,5.0000000000000000e-1\n# slope=-1\n");
    }
}
