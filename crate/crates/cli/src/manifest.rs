//! Run manifests: what a command was asked to do and what it read.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tss_core::TssError;

use crate::error::CliResult;

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-specific settings.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// `sha256:` digest over every input file, see [`hash_inputs`].
    pub input_hash: String,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join(RUN_MANIFEST), format!("{json}\n").as_bytes())
    }
}

/// Hashes the relative path and contents of every file under the inputs, in
/// sorted order, so moving an input tree does not change the digest.
pub fn hash_inputs(inputs: &[&Path]) -> CliResult<String> {
    let mut hasher = Sha256::new();
    for input in inputs {
        let mut files = Vec::new();
        if input.is_dir() {
            collect_files(input, &mut files)?;
        } else {
            files.push(input.to_path_buf());
        }
        files.sort();
        for file in files {
            let rel = file.strip_prefix(input).unwrap_or(&file);
            let bytes = fs::read(&file).map_err(|e| TssError::io(&file, e))?;
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let entries = fs::read_dir(dir).map_err(|e| TssError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| TssError::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| TssError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| TssError::io(path, e))?;
    Ok(())
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| TssError::io(path, e))?;
    Ok(())
}
