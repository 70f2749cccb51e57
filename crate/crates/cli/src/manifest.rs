//! Run manifests: what was run, with which settings and seeds, on which
//! inputs, producing which files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sirmix_core::rng::{sha256_hex, RNG_ALGORITHM};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub toolkit: &'static str,
    pub toolkit_version: &'static str,
    pub format_version: u32,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub rng: &'static str,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
    pub threads: usize,
    pub runtime_seconds: f64,
}

/// Collects inputs, outputs and seeds while a subcommand runs.
pub struct Run {
    subcommand: &'static str,
    out: Option<PathBuf>,
    started: Instant,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    pub seeds: BTreeMap<String, u64>,
}

fn digest(path: String, bytes: &[u8]) -> FileDigest {
    FileDigest {
        path,
        bytes: bytes.len() as u64,
        sha256: sha256_hex(bytes),
    }
}

impl Run {
    pub fn new(subcommand: &'static str, out: Option<PathBuf>) -> Self {
        Run {
            subcommand,
            out,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    pub fn require_out(&self) -> CliResult<&Path> {
        self.out_dir()
            .ok_or_else(|| CliError::usage(format!("`{}` needs --out", self.subcommand)))
    }

    /// Reads an input file and records its digest.
    pub fn read_input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes =
            fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(digest(path.display().to_string(), &bytes));
        Ok(bytes)
    }

    /// Records an in-memory input such as a bundled data set.
    pub fn note_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(digest(name.to_string(), bytes));
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let dir = self.require_out()?.to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(digest(name.to_string(), bytes));
        Ok(())
    }

    /// Records files that another component already wrote under the output directory.
    pub fn adopt(&mut self, files: &[PathBuf]) -> CliResult<()> {
        let dir = self.require_out()?.to_path_buf();
        for f in files {
            let bytes = fs::read(f).map_err(|e| CliError::data(format!("cannot read {}: {e}", f.display())))?;
            let name = f.strip_prefix(&dir).unwrap_or(f).display().to_string();
            self.outputs.push(digest(name, &bytes));
        }
        Ok(())
    }

    /// Writes `manifest.json` when there is an output directory.
    pub fn finish(self, config: serde_json::Value, summary: serde_json::Value) -> CliResult<Option<RunManifest>> {
        let Some(dir) = self.out.clone() else {
            return Ok(None);
        };
        let mut outputs = self.outputs;
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            toolkit: "sirmix",
            toolkit_version: env!("CARGO_PKG_VERSION"),
            format_version: FORMAT_VERSION,
            subcommand: self.subcommand.to_string(),
            config,
            seeds: self.seeds,
            rng: RNG_ALGORITHM,
            inputs: self.inputs,
            outputs,
            summary,
            threads: rayon::current_num_threads(),
            runtime_seconds: self.started.elapsed().as_secs_f64(),
        };
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::data(e.to_string()))?;
        fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        fs::write(dir.join(MANIFEST_FILE), bytes).map_err(|e| CliError::data(e.to_string()))?;
        Ok(Some(manifest))
    }
}
