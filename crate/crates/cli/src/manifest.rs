//! Run manifest: what was run, with which config, and what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{hex, Loaded};
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub mode: String,
    pub started: String,
    pub finished: String,
    pub metrics: Value,
    pub files: Vec<FileEntry>,
}

/// Collects the files a command writes under the output directory.
pub struct Outputs {
    pub dir: PathBuf,
    written: Vec<PathBuf>,
    started: String,
}

impl Outputs {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            written: Vec::new(),
            started: now(),
        })
    }

    /// Writes `rel` through `f`, creating parent directories.
    pub fn write<F>(&mut self, rel: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(rel, &buf)
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.record(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    /// Registers a file written by someone else.
    pub fn record(&mut self, path: PathBuf) {
        if !self.written.contains(&path) {
            self.written.push(path);
        }
    }

    /// Writes `manifest-<command>.json` and returns its path.
    pub fn finish(self, command: &str, loaded: &Loaded, metrics: Value) -> Result<PathBuf, CliError> {
        let mut files = Vec::with_capacity(self.written.len());
        for p in &self.written {
            files.push(entry(&self.dir, p)?);
        }
        let manifest = Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: loaded.hash(),
            seed: loaded.config.seed,
            mode: serde_json::to_value(loaded.config.mode)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            started: self.started,
            finished: now(),
            metrics,
            files,
        };
        let path = self.dir.join(format!("manifest-{command}.json"));
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn entry(dir: &Path, path: &Path) -> Result<FileEntry, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(FileEntry {
        path: rel.to_string_lossy().replace('\\', "/"),
        bytes: bytes.len() as u64,
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}
