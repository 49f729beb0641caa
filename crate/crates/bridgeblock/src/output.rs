//! Result files. Every CSV opens with `#` comment lines carrying the config hash, seed and
//! code version; every JSON document carries them as top-level fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl RunMeta {
    pub fn new(config_hash: String, seed: u64) -> Self {
        RunMeta { config_hash, seed, version: VERSION.to_string() }
    }

    pub fn csv_preamble(&self) -> String {
        format!("# config_hash={}\n# seed={}\n# version={}\n", self.config_hash, self.seed, self.version)
    }
}

/// A column of a CSV file and what it holds.
#[derive(Debug, Clone, Serialize)]
pub struct Column {
    pub name: String,
    pub description: String,
}

impl Column {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Column { name: name.into(), description: description.into() }
    }
}

/// A results directory, with the schema of the CSV files written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    meta: RunMeta,
    schema: Mutex<Vec<(String, Vec<Column>)>>,
}

impl OutputDir {
    pub fn create(root: &Path, meta: RunMeta) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), meta, schema: Mutex::new(Vec::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn meta(&self) -> &RunMeta {
        &self.meta
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Opens `name` for writing, emits the preamble and header row, and registers the columns.
    pub fn csv(&self, name: &str, columns: Vec<Column>) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let header: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(w, "{}{}", self.meta.csv_preamble(), header.join(",")).map_err(|e| CliError::io(&path, e))?;
        self.register(name, columns);
        Ok(w)
    }

    /// Registers columns for a file whose header row is written elsewhere.
    pub fn register(&self, name: &str, columns: Vec<Column>) {
        let mut schema = self.schema.lock().expect("schema lock");
        schema.retain(|(n, _)| n != name);
        schema.push((name.to_string(), columns));
    }

    /// Writes `value` (an object) with the run metadata merged in as top-level fields.
    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut doc = match serde_json::to_value(value).map_err(|e| CliError::io(&path, e))? {
            Value::Object(map) => map,
            other => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                map
            }
        };
        doc.insert("config_hash".into(), json!(self.meta.config_hash));
        doc.insert("seed".into(), json!(self.meta.seed));
        doc.insert("version".into(), json!(self.meta.version));
        let text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| CliError::io(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    /// Writes `schema.json` describing every registered CSV file.
    pub fn write_schema(&self) -> Result<(), CliError> {
        let schema = self.schema.lock().expect("schema lock").clone();
        let files: Map<String, Value> = schema
            .into_iter()
            .map(|(name, cols)| (name, serde_json::to_value(cols).expect("columns serialise")))
            .collect();
        self.json("schema.json", &json!({ "files": files }))
    }
}

/// Appends whole rows to a shared CSV; each row is written and flushed under one lock.
pub struct RowWriter<W: Write> {
    inner: Mutex<W>,
}

impl<W: Write> RowWriter<W> {
    pub fn new(inner: W) -> Self {
        RowWriter { inner: Mutex::new(inner) }
    }

    pub fn append(&self, row: &str) -> std::io::Result<()> {
        let mut w = self.inner.lock().expect("row writer lock");
        w.write_all(row.as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner.into_inner().expect("row writer lock")
    }
}

/// Formats a float for CSV; non-finite values become empty cells.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        String::new()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}
