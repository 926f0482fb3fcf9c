//! Tabular artifacts and their CSV/JSON encodings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
    Bool(bool),
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Self::Int(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Self::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Self::Int(x as i64)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Self::Real(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Self::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Self::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Self::Text(x)
    }
}

impl Cell {
    /// CSV text: reals with 17 significant digits.
    fn csv(&self) -> String {
        match self {
            Self::Int(x) => x.to_string(),
            Self::Real(x) if x.is_finite() => format!("{x:.16e}"),
            Self::Real(x) => x.to_string(),
            Self::Text(s) => s.clone(),
            Self::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Self::Int(x) => json!(x),
            Self::Real(x) if x.is_finite() => json!(x),
            Self::Real(x) => json!(x.to_string()),
            Self::Text(s) => json!(s),
            Self::Bool(b) => json!(b),
        }
    }
}

/// A named table with fixed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self { name, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let obj: Map<String, Value> =
                        self.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Provenance block written at the top of every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub library_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
}

/// Everything a command produces.
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub tables: Vec<Table>,
    /// Structured extras included in JSON artifacts only.
    pub extra: Map<String, Value>,
    /// Statistical verdict; `Some(false)` maps to exit code 3.
    pub pass: Option<bool>,
}

/// Writes the artifacts into `dir` and returns their paths. CSV writes one
/// file per table; JSON writes a single document.
pub fn write(dir: &Path, format: Format, meta: &Metadata, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let stem = &meta.command;
    match format {
        Format::Json => {
            let mut doc = Map::new();
            doc.insert("metadata".into(), serde_json::to_value(meta)?);
            for (k, v) in &out.extra {
                doc.insert(k.clone(), v.clone());
            }
            let tables: Map<String, Value> = out.tables.iter().map(|t| (t.name.to_string(), t.json())).collect();
            doc.insert("tables".into(), Value::Object(tables));
            let path = dir.join(format!("{stem}.{}", format.extension()));
            let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
            text.push('\n');
            fs::write(&path, text)?;
            Ok(vec![path])
        }
        Format::Csv => out
            .tables
            .iter()
            .map(|t| {
                let path = dir.join(format!("{stem}-{}.{}", t.name, format.extension()));
                write_csv(&path, meta, t)?;
                Ok(path)
            })
            .collect(),
    }
}

fn write_csv(path: &Path, meta: &Metadata, table: &Table) -> Result<(), CliError> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# tool: {} {}", meta.tool, meta.tool_version)?;
    writeln!(file, "# library: skellam-core {}", meta.library_version)?;
    writeln!(file, "# command: {}", meta.command)?;
    writeln!(file, "# seed: {}", meta.seed)?;
    writeln!(file, "# config-sha256: {}", meta.config_sha256)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::csv))?;
    }
    w.flush()?;
    Ok(())
}
