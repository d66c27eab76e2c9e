//! Output staging and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Units;
use crate::error::{CliError, CliResult};
use crate::io::{CsvOut, Source};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: impl Into<String>, bytes: &[u8]) -> Self {
        FileDigest {
            path: path.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        }
    }

    pub fn of_source(src: &Source) -> Self {
        Self::of(src.name.clone(), &src.bytes)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub rows: usize,
    pub warning_count: usize,
    pub warnings: Vec<String>,
    pub wall_ms: u128,
}

/// Collects a stage's row count and warnings while it runs.
pub struct StageTimer {
    report: StageReport,
    start: Instant,
}

impl StageTimer {
    pub fn start(stage: &str) -> Self {
        StageTimer {
            report: StageReport {
                stage: stage.to_string(),
                rows: 0,
                warning_count: 0,
                warnings: Vec::new(),
                wall_ms: 0,
            },
            start: Instant::now(),
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{}: {msg}", self.report.stage);
        self.report.warning_count += 1;
        self.report.warnings.push(msg);
    }

    pub fn rows(&mut self, n: usize) {
        self.report.rows += n;
    }

    pub fn finish(mut self) -> StageReport {
        self.report.wall_ms = self.start.elapsed().as_millis();
        self.report
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub units: Units,
    pub inputs: Vec<FileDigest>,
    pub stages: Vec<StageReport>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, units: Units) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: None,
            seed: None,
            threads: rayon::current_num_threads(),
            units,
            inputs: Vec::new(),
            stages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, src: &Source) {
        self.inputs.push(FileDigest::of_source(src));
    }

    pub fn warning_count(&self) -> usize {
        self.stages.iter().map(|s| s.warning_count).sum()
    }
}

/// Output files held in memory, written together at the end.
#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
}

pub const MANIFEST: &str = "manifest.json";

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn csv(&mut self, name: impl Into<String>, table: &CsvOut) {
        self.bytes(name, table.to_bytes());
    }

    pub fn bytes(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        let name = name.into();
        debug_assert!(!name.contains('/') && !name.starts_with('.'));
        self.files.insert(name, bytes);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn digests(&self) -> Vec<FileDigest> {
        self.files
            .iter()
            .map(|(n, b)| FileDigest::of(n.clone(), b))
            .collect()
    }

    /// Add the manifest, write everything to a staging directory inside
    /// `dir`, then rename each file into place.
    pub fn commit(mut self, dir: &Path, mut manifest: RunManifest) -> CliResult<RunManifest> {
        manifest.outputs = self.digests();
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        self.files.insert(MANIFEST.to_string(), json);

        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let staging = dir.join(format!(".staging-{}", std::process::id()));
        let result = self.write_staged(&staging, dir);
        let _ = std::fs::remove_dir_all(&staging);
        result.map(|_| manifest)
    }

    fn write_staged(&self, staging: &Path, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(staging).map_err(|e| CliError::io(staging, e))?;
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let tmp = staging.join(name);
            std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, dst) in staged {
            std::fs::rename(&tmp, &dst).map_err(|e| CliError::io(&dst, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_writes_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::new();
        let mut t = CsvOut::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        out.csv("x.csv", &t);
        let m = out
            .commit(dir.path(), RunManifest::new("test", Units::Proportion))
            .unwrap();
        assert_eq!(m.outputs.len(), 1);
        let text = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
        assert_eq!(text, "a,b\n1,2\n");
        assert!(dir.path().join(MANIFEST).exists());
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with(".staging"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn digest_matches_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
