use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A file produced by a command, held in memory until it is written.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { name: name.into(), bytes }
    }

    pub fn json(name: impl Into<String>, value: &impl Serialize) -> Self {
        Self::new(name, crate::report::to_json_bytes(value))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: String,
    pub duration_seconds: f64,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Writes every artifact into `dir` followed by `manifest.json`.
pub fn write_all(dir: &Path, artifacts: &[Artifact], mut manifest: RunManifest) -> Result<PathBuf, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(io(&path))?;
        manifest.artifacts.push(ArtifactEntry {
            path: a.name.clone(),
            bytes: a.bytes.len(),
            sha256: sha256_hex(&a.bytes),
        });
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, crate::report::to_json_bytes(&manifest)).map_err(io(&path))?;
    Ok(path)
}
