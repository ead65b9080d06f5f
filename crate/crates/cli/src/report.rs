//! Report assembly, hashing and atomic emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// A CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table { name: name.to_string(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Shortest round-trip decimal form; `inf`, `-inf` and `nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// A statistical or exact acceptance test, enforced by `--assert`.
    Assertion,
    /// Capped, excluded or indeterminate results; always enforced.
    Tolerance,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn assertion(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), kind: CheckKind::Assertion, passed, detail: detail.into() }
    }

    pub fn tolerance(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), kind: CheckKind::Tolerance, passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Counters {
    pub replicas: usize,
    pub excluded: usize,
    pub censored: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub seed_source: &'static str,
    pub generator: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub config: Value,
    pub config_hash: String,
    pub rng: Provenance,
    pub counters: Counters,
    pub checks: Vec<Check>,
    pub results: Value,
    pub tables: Vec<String>,
    /// SHA-256 over the report with this field empty, followed by every
    /// table in order.
    pub report_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Report {
    pub fn seal(&mut self, tables: &[Table]) -> Result<()> {
        self.report_hash.clear();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self)?);
        for t in tables {
            h.update(t.name.as_bytes());
            h.update(t.to_csv()?);
        }
        self.report_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn failed(&self, kind: CheckKind) -> Vec<&Check> {
        self.report.checks.iter().filter(|c| c.kind == kind && !c.passed).collect()
    }

    /// 3 when a tolerance is exceeded, 1 when `assert` is set and an
    /// assertion failed, 0 otherwise.
    pub fn exit_code(&self, assert: bool) -> i32 {
        if !self.failed(CheckKind::Tolerance).is_empty() {
            3
        } else if assert && !self.failed(CheckKind::Assertion).is_empty() {
            1
        } else {
            0
        }
    }
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

/// Writes `report.json` and one CSV per table into a staging directory and
/// renames it onto `out`; nothing is left behind on failure.
pub fn emit(out: &Path, outcome: &Outcome, timing: Option<&Value>) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let stage = staging_dir(out);
    if stage.exists() {
        fs::remove_dir_all(&stage)?;
    }
    let result = (|| -> Result<()> {
        fs::create_dir_all(&stage)?;
        let mut json = serde_json::to_vec_pretty(&outcome.report)?;
        json.push(b'\n');
        fs::write(stage.join("report.json"), json)?;
        for t in &outcome.tables {
            fs::write(stage.join(format!("{}.csv", t.name)), t.to_csv()?)?;
        }
        if let Some(tm) = timing {
            fs::write(stage.join("timing.json"), serde_json::to_vec_pretty(tm)?)?;
        }
        if out.exists() {
            fs::remove_dir_all(out)?;
        }
        fs::rename(&stage, out)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&stage);
    }
    result
}
