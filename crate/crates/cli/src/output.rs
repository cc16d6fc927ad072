//! Artifact writers. Every file carries the run metadata: JSON documents in
//! a top-level `metadata` object, CSV files as leading `# key: value` lines.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "youden";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub level: f64,
    /// Learning rate used for the reported posterior, when there is one.
    pub omega: Option<f64>,
    pub prior: Value,
    pub probs: Value,
    /// Original covariate range when the input was rescaled onto `[0, 1]`.
    pub covariate_range: Option<[f64; 2]>,
}

impl Metadata {
    fn lines(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), fmt_float);
        vec![
            ("tool".into(), self.tool.into()),
            ("version".into(), self.version.into()),
            ("command".into(), self.command.clone()),
            ("config_hash".into(), self.config_hash.clone()),
            ("seed".into(), self.seed.to_string()),
            ("threads".into(), self.threads.to_string()),
            ("level".into(), fmt_float(self.level)),
            ("omega".into(), opt(self.omega)),
            ("prior".into(), self.prior.to_string()),
            ("probs".into(), self.probs.to_string()),
            (
                "covariate_range".into(),
                self.covariate_range.map_or_else(|| "none".into(), |[a, b]| format!("{},{}", fmt_float(a), fmt_float(b))),
            ),
        ]
    }
}

/// SHA-256 of the canonical JSON form of `value`, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub struct Writer {
    dir: PathBuf,
    metadata: Metadata,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, metadata: Metadata) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), metadata, written: Vec::new() })
    }

    pub fn metadata_mut(&mut self) -> &mut Metadata {
        &mut self.metadata
    }

    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<PathBuf> {
        let mut doc = serde_json::Map::new();
        doc.insert("metadata".into(), serde_json::to_value(&self.metadata)?);
        match serde_json::to_value(body)? {
            Value::Object(map) => doc.extend(map),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
        text.push('\n');
        self.put(name, text)
    }

    /// Rows are written as given; use [`fmt_float`] for numbers.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut text = String::new();
        for (k, v) in self.metadata.lines() {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        text.push_str(std::str::from_utf8(&w.into_inner()?)?);
        self.put(name, text)
    }

    fn put(&mut self, name: &str, text: String) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn into_written(self) -> Vec<PathBuf> {
        self.written
    }
}
