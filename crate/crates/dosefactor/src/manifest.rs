//! Run manifests: everything needed to repeat a run, written last and
//! atomically.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    /// Derived seeds, keyed by what they drive.
    pub derived_seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub versions: BTreeMap<String, String>,
    pub timings: Vec<Timing>,
    /// Command-specific reports (alignment, preprocessing, failures).
    pub reports: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: serde_json::Value) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("dosefactor".into(), env!("CARGO_PKG_VERSION").into());
        Self {
            command: command.into(),
            args: std::env::args().collect(),
            seed,
            derived_seeds: BTreeMap::new(),
            threads,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions,
            timings: Vec::new(),
            reports: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileHash { role: role.into(), path: path.to_path_buf(), sha256 });
        Ok(())
    }

    /// Hash every regular file under `root` (recursively, sorted), recording
    /// paths relative to `root`.
    pub fn add_outputs(&mut self, root: &Path) -> Result<()> {
        let mut files = Vec::new();
        collect_files(root, &mut files)?;
        files.sort();
        for f in files {
            let rel = f.strip_prefix(root).unwrap_or(&f).to_path_buf();
            if rel == Path::new("manifest.json") {
                continue;
            }
            self.outputs.push(FileHash { role: "output".into(), sha256: sha256_file(&f)?, path: rel });
        }
        Ok(())
    }

    pub fn report(&mut self, name: &str, value: impl Serialize) {
        self.reports.insert(name.into(), serde_json::to_value(value).expect("report serializes"));
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::output(dir, e))? {
        let path = entry.map_err(|e| CliError::output(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| CliError::output(path, e))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(|e| CliError::output(path, e))?;
    Ok(hex::encode(h.finalize()))
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::output(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::output(path, e))
}

/// Wall-clock stage timer.
pub struct Stopwatch {
    start: Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self { start: Instant::now() }
    }

    pub fn lap(&mut self, manifest: &mut RunManifest, stage: &str) {
        manifest.timings.push(Timing { stage: stage.into(), seconds: self.start.elapsed().as_secs_f64() });
        self.start = Instant::now();
    }
}
