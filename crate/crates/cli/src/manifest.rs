use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: &'static str,
    pub flags: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_ms: u128,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest(path: &Path) -> CliResult<FileDigest> {
    let bytes = fs::read(path).map_err(|source| CliError::Output { path: path.to_path_buf(), source })?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Collects inputs and outputs over a run, then writes the manifest.
pub struct Recorder {
    started: Instant,
    subcommand: &'static str,
    flags: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(subcommand: &'static str, flags: &impl Serialize) -> Self {
        Self {
            started: Instant::now(),
            subcommand,
            flags: serde_json::to_value(flags).unwrap_or(serde_json::Value::Null),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Writes `contents` to `dir/name` and records it.
    pub fn write(&mut self, dir: &Path, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Output { path: path.clone(), source })?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Records a file some library call already wrote.
    pub fn written(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn finish(self, dir: &Path) -> CliResult<RunManifest> {
        let outputs = self.outputs.iter().map(|p| digest(p)).collect::<CliResult<Vec<_>>>()?;
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            flags: self.flags,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            duration_ms: self.started.elapsed().as_millis(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(assetpop_core::Error::from)?;
        text.push('\n');
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|source| CliError::Output { path, source })?;
        Ok(manifest)
    }
}
