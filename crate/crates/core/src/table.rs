//! Comma-separated result tables and run manifests.
//!
//! Every row carries the hash of the configuration that produced it, in the
//! first column. A table only ever holds rows from a single configuration.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::config::Scenario;
use crate::error::{Error, Result};

pub const HASH_COLUMN: &str = "config_hash";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    config_hash: String,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(config_hash: &str, columns: &[S]) -> Self {
        Table {
            config_hash: config_hash.to_string(),
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, values: Vec<String>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::DimensionMismatch { expected: self.columns.len(), found: values.len() });
        }
        self.rows.push(values);
        Ok(())
    }

    /// Adds a row produced under `hash`; rows from another config are refused.
    pub fn push_tagged(&mut self, hash: &str, values: Vec<String>) -> Result<()> {
        if hash != self.config_hash {
            return Err(Error::Table(format!(
                "row from config {hash} cannot join a table for config {}",
                self.config_hash
            )));
        }
        self.push(values)
    }

    pub fn append(&mut self, other: &Table) -> Result<()> {
        if other.columns != self.columns {
            return Err(Error::Table("column sets differ".into()));
        }
        for row in &other.rows {
            self.push_tagged(&other.config_hash, row.clone())?;
        }
        Ok(())
    }

    /// Value of `column` in row `row`.
    pub fn get(&self, row: usize, column: &str) -> Option<&str> {
        let idx = self.columns.iter().position(|c| c == column)?;
        self.rows.get(row).map(|r| r[idx].as_str())
    }

    pub fn column_f64(&self, column: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::Table(format!("no column '{column}'")))?;
        self.rows
            .iter()
            .map(|r| r[idx].parse::<f64>().map_err(|e| Error::Table(format!("{column}: {e}"))))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![HASH_COLUMN.to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            w.write_record(std::iter::once(self.config_hash.as_str()).chain(row.iter().map(String::as_str)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Table(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(fs::File::create(path)?)
    }

    /// Reads a table written by [`Table::write_csv`]. Fails when rows carry
    /// different config hashes.
    pub fn read_csv<R: Read>(input: R) -> Result<Table> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0) != Some(HASH_COLUMN) {
            return Err(Error::Table(format!("first column must be '{HASH_COLUMN}'")));
        }
        let columns: Vec<&str> = header.iter().skip(1).collect();
        let mut table: Option<Table> = None;
        for rec in r.records() {
            let rec = rec?;
            let hash = rec.get(0).unwrap_or_default();
            let t = table.get_or_insert_with(|| Table::new(hash, &columns));
            t.push_tagged(hash, rec.iter().skip(1).map(str::to_string).collect())?;
        }
        Ok(table.unwrap_or_else(|| Table::new("", &columns)))
    }

    pub fn load(path: &Path) -> Result<Table> {
        Table::read_csv(fs::File::open(path)?)
    }
}

/// Shortest round-trip formatting; `inf` and `NaN` for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    v.to_string()
}

/// Run manifest: command, crate version, config hash, emitted tables and the
/// canonical config echo.
pub fn manifest_text(command: &str, scenario: &Scenario, tables: &[&str]) -> String {
    format!(
        "command = {command}\nversion = {} {}\nconfig_hash = {}\ntables = {}\n\n# config\n{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        scenario.config_hash(),
        tables.join(","),
        scenario.render()
    )
}

/// Writes `tables` as `<name>.csv` plus `manifest.txt` into `dir`.
pub fn write_run(dir: &Path, command: &str, scenario: &Scenario, tables: &[(&str, &Table)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let hash = scenario.config_hash();
    let mut written = Vec::new();
    let mut names = Vec::new();
    for (name, table) in tables {
        if table.config_hash() != hash {
            return Err(Error::Table(format!("table '{name}' belongs to config {}", table.config_hash())));
        }
        let file = format!("{name}.csv");
        let path = dir.join(&file);
        table.save(&path)?;
        written.push(path);
        names.push(file);
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest_text(command, scenario, &refs))?;
    written.push(path);
    Ok(written)
}
