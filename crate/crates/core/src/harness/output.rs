//! CSV tables and the run manifest. Floats are written with the shortest
//! representation that round-trips, so re-parsing a table reproduces the
//! in-memory values exactly.

use crate::error::Result;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub enum Field {
    Int(i64),
    UInt(u64),
    Float(f64),
    Text(String),
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Int(v) => write!(f, "{v}"),
            Field::UInt(v) => write!(f, "{v}"),
            Field::Float(v) => write!(f, "{v}"),
            Field::Text(v) => write!(f, "{v}"),
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}
impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::UInt(v as u64)
    }
}
impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::UInt(v)
    }
}
impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.into())
    }
}
impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<Field>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(row.len(), self.header.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|f| f.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub name: String,
    pub runtime_s: f64,
    pub status: String,
    pub csv: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub rng_scheme: String,
    pub seed: u64,
    pub config: std::collections::BTreeMap<String, String>,
    pub cells: Vec<CellRecord>,
    pub timestamp_unix_s: u64,
}

impl Manifest {
    pub fn new(
        experiment: &str,
        seed: u64,
        config: std::collections::BTreeMap<String, String>,
    ) -> Self {
        Manifest {
            experiment: experiment.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng_scheme: "splitmix64-boxmuller-v1".into(),
            seed,
            config,
            cells: Vec::new(),
            timestamp_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self).expect("serializable") + "\n")?;
        Ok(path)
    }
}
