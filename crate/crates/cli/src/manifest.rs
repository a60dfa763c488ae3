//! Run manifests: what a command read, what it wrote, and content digests
//! that make reruns comparable byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fnv::FnvHasher;
use serde::Serialize;

/// 64-bit FNV-1a over `bytes`, rendered as 16 hex digits.
pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub fnv1a64: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            fnv1a64: fnv1a64(&fs::read(path)?),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            duration_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.config.push((key.into(), value.to_string()));
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn finish(&mut self) {
        if let Some(t) = self.started.take() {
            self.duration_seconds = t.elapsed().as_secs_f64();
        }
    }

    /// One tab-separated record per line: `command`, `config`, `input`,
    /// `output` and `duration_seconds`.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("command\t{}\n", self.command);
        for (k, v) in &self.config {
            writeln!(out, "config\t{k}\t{v}").unwrap();
        }
        for d in &self.inputs {
            writeln!(out, "input\t{}\t{}", d.path.display(), d.fnv1a64).unwrap();
        }
        for d in &self.outputs {
            writeln!(out, "output\t{}\t{}", d.path.display(), d.fnv1a64).unwrap();
        }
        writeln!(out, "duration_seconds\t{}", self.duration_seconds).unwrap();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
