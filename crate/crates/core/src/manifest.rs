//! Run manifests: what a command read, what it wrote and with which settings.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Git-style object hash: SHA-256 over `"blob <len>\0"` followed by the bytes.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(blob_hash(&fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub hash: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            hash: file_hash(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// Every setting the command resolved, including defaults.
    pub config: serde_json::Value,
    pub inputs: Vec<Artifact>,
    /// Output paths relative to the manifest's directory.
    pub outputs: Vec<Artifact>,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: unix_now(),
            finished_at: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Artifact::of(path)?);
        Ok(())
    }

    /// Record outputs that live in `dir`, hashing their current contents.
    pub fn add_outputs<P: AsRef<Path>>(&mut self, dir: &Path, files: &[P]) -> Result<()> {
        for f in files {
            let f = f.as_ref();
            let rel = f.strip_prefix(dir).unwrap_or(f);
            self.outputs.push(Artifact {
                path: rel.to_path_buf(),
                hash: file_hash(&dir.join(rel))?,
            });
        }
        Ok(())
    }

    /// Stamp the finish time and write `manifest.json` into `dir`, replacing
    /// any earlier manifest there.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_at = unix_now();
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::config(format!("cannot read manifest `{}`: {e}", path.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Check that `file` inside `dir` still matches the hash its directory's
/// manifest recorded, and return the resolved path.
pub fn verify_artifact(dir: &Path, file: &str) -> Result<PathBuf> {
    let manifest = RunManifest::read(dir)?;
    let path = dir.join(file);
    let entry = manifest
        .outputs
        .iter()
        .find(|a| a.path == Path::new(file))
        .ok_or_else(|| {
            Error::config(format!(
                "`{file}` is not listed in {}",
                dir.join(MANIFEST_FILE).display()
            ))
        })?;
    if !path.exists() {
        return Err(Error::config(format!(
            "missing artifact `{}`",
            path.display()
        )));
    }
    if file_hash(&path)? != entry.hash {
        return Err(Error::HashMismatch {
            path: path.display().to_string(),
        });
    }
    Ok(path)
}
