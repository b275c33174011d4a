//! Output files: tables in CSV or JSON, atomic writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A rectangular table with named columns.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Collects everything a command writes so the manifest can list it.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Outputs, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    /// Lists a file written by other code, if it exists.
    pub fn record(&mut self, name: &str) {
        if self.dir.join(name).exists() && !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), data)?;
        self.record(name);
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(CliError::computation)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    /// Writes `<stem>.csv` or `<stem>.json` depending on `format`.
    pub fn table(&mut self, stem: &str, table: &Table, format: Format) -> Result<(), CliError> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&table.columns).map_err(CliError::computation)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(cell)).map_err(CliError::computation)?;
                }
                let data = w.into_inner().map_err(|e| CliError::computation(e.error().to_string()))?;
                self.bytes(&format!("{stem}.csv"), &data)
            }
            Format::Json => {
                let doc = serde_json::json!({ "columns": table.columns, "rows": table.rows });
                self.json(&format!("{stem}.json"), &doc)
            }
        }
    }
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, data).map_err(|e| CliError::output(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::output(path, e))
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// Content digests of a file, or of every file under a directory keyed by
/// relative path.
pub fn digest_inputs(path: &Path, into: &mut BTreeMap<String, String>) -> Result<(), CliError> {
    if path.is_file() {
        let data = fs::read(path).map_err(|e| CliError::input(path, e))?;
        into.insert(path.display().to_string(), sha256_hex(&data));
        return Ok(());
    }
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(e) => return Err(CliError::input(&dir, e)),
        };
        for entry in entries {
            let p = entry.map_err(|e| CliError::input(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let data = fs::read(&p).map_err(|e| CliError::input(&p, e))?;
                into.insert(p.display().to_string(), sha256_hex(&data));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: Value,
    pub input_digests: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub wall_clock_secs: f64,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "run_manifest.json";
