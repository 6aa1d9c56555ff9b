//! CSV and JSON artifacts and the manifest that lists them.

use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Floats carry 17 significant digits so they re-parse to the same double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(usize),
    B(bool),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::F)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::B(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        // writing into a Vec cannot fail
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }
}

/// A file produced by a command, held in memory until the run is over.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn csv(name: &str, t: &Table) -> Self {
        Self { name: name.into(), bytes: t.to_csv() }
    }

    /// Pretty JSON; object keys come out sorted.
    pub fn json(name: &str, v: &Value) -> Self {
        let mut bytes = serde_json::to_vec_pretty(&sorted(v.clone())).expect("json value");
        bytes.push(b'\n');
        Self { name: name.into(), bytes }
    }
}

fn sorted(v: Value) -> Value {
    // explicit, in case `preserve_order` gets enabled somewhere in the tree
    match v {
        Value::Object(m) => {
            let mut e: Vec<(String, Value)> = m.into_iter().collect();
            e.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(e.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sorted).collect()),
        other => other,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest(cfg: &RunConfig, artifacts: &[Artifact]) -> Artifact {
    let config: serde_json::Map<String, Value> =
        cfg.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect();
    let files: Vec<Value> = artifacts
        .iter()
        .map(|a| json!({ "name": a.name, "sha256": sha256_hex(&a.bytes), "bytes": a.bytes.len() }))
        .collect();
    Artifact::json(
        "manifest.json",
        &json!({
            "command": cfg.cmd.as_str(),
            "config": config,
            "eps": cfg.eps_values(),
            "files": files,
            "versions": { "bubbletower": bubbletower::VERSION, "bubbletower-cli": env!("CARGO_PKG_VERSION") },
        }),
    )
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for a in artifacts {
        let p = dir.join(&a.name);
        std::fs::write(&p, &a.bytes).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}
