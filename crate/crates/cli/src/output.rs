//! Artifact writing and the run manifest.

use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Emitted {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Everything needed to re-run an invocation and check its artifacts.
/// Only `stages` holds timings.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: Vec<String>,
    pub config: Config,
    /// Config keys that were filled from defaults.
    pub defaults: Vec<String>,
    pub stages: Vec<Stage>,
    pub files: Vec<Emitted>,
}

/// Writes files under one directory, created on first write, and records
/// their digests.
pub struct Output {
    dir: PathBuf,
    files: Vec<Emitted>,
    stages: Vec<Stage>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Output {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Output {
            dir: dir.into(),
            files: Vec::new(),
            stages: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.files.push(Emitted {
            name: name.to_owned(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: stage.to_owned(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes `manifest-<stem>.json` listing every file emitted so far.
    pub fn finish(mut self, stem: &str, command: Vec<String>, config: &Config, defaults: &[String]) -> io::Result<PathBuf> {
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command,
            config: config.clone(),
            defaults: defaults.to_vec(),
            stages: std::mem::take(&mut self.stages),
            files: std::mem::take(&mut self.files),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("manifest-{stem}.json"));
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
