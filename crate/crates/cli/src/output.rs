//! CSV tables with a `#` metadata block.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use sha2::{Digest, Sha256};

use crate::config::{emit, ExperimentConfig};

/// Metadata written at the top of every output file.
#[derive(Debug, Clone)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    /// The hash covers the canonical config minus the output directory, so
    /// the same experiment written elsewhere carries the same header.
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let mut canonical = cfg.clone();
        canonical.run.out.clear();
        let digest = Sha256::digest(emit(&canonical).as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self { command: command.into(), config_hash, seed: cfg.run.seed }
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    extra: Vec<(String, String)>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new(), extra: Vec::new() }
    }

    pub fn row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Extra `# key: value` metadata line.
    pub fn note(&mut self, key: &str, value: String) {
        self.extra.push((key.into(), value));
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn write(&self, dir: &Path, name: &str, meta: &Meta) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        let mut buf = Vec::new();
        buf.extend_from_slice(format!("# curvehedge {}\n", env!("CARGO_PKG_VERSION")).as_bytes());
        buf.extend_from_slice(format!("# command: {}\n", meta.command).as_bytes());
        buf.extend_from_slice(format!("# config_sha256: {}\n", meta.config_hash).as_bytes());
        buf.extend_from_slice(format!("# seed: {}\n", meta.seed).as_bytes());
        for (k, v) in &self.extra {
            buf.extend_from_slice(format!("# {k}: {v}\n").as_bytes());
        }
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
            w.write_record(&self.header)?;
            for r in &self.rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
