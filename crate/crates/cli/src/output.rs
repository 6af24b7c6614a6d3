//! Reproducibility metadata and deterministic file writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub fn version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub rng: &'static str,
}

impl Metadata {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            version: version(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            rng: mrp_core::datagen::RNG_NAME,
        }
    }

    /// One `#` comment line for CSV outputs.
    pub fn csv_line(&self) -> String {
        format!(
            "# version={} seed={} config_hash={}\n",
            self.version, self.seed, self.config_hash
        )
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("cannot write {}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).expect("output serializes") + "\n";
    write_text(path, &text)
}

/// Long-format CSV builder: a metadata comment, a header, then rows.
pub struct LongCsv {
    text: String,
}

impl LongCsv {
    pub fn new(meta: &Metadata, header: &[&str]) -> Self {
        let mut text = meta.csv_line();
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{f}").expect("writing to a String");
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}
