//! Atomic run output: artifacts are written to a staging directory next to the target
//! and renamed into place once the manifest, written last, is complete.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub point: Vec<(String, f64)>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub tool_version: String,
    pub seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub artifacts: Vec<Artifact>,
    pub notes: Vec<String>,
    pub failures: Vec<PointFailure>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Staging area for one run. Dropping it without [`Stage::commit`] removes it.
#[derive(Debug)]
pub struct Stage {
    target: PathBuf,
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    committed: bool,
}

impl Stage {
    pub fn new(target: &Path) -> io::Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let name = target
            .file_name()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no final component"))?
            .to_string_lossy()
            .into_owned();
        let nonce = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.subsec_nanos())
            .unwrap_or(0);
        let dir = parent.join(format!(".{name}.staging-{}-{nonce}", std::process::id()));
        fs::create_dir(&dir)?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            artifacts: Vec::new(),
            committed: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Writes `name` (a relative path) into the staging area and records its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let rel = Path::new(name);
        if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("artifact path {name} escapes the run directory")));
        }
        let path = self.dir.join(rel);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        fs::write(&path, bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    /// Writes the manifest and moves the staging directory onto the target.
    pub fn commit(mut self, mut manifest: RunManifest) -> io::Result<RunManifest> {
        manifest.artifacts = self.artifacts.clone();
        manifest.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let text = serde_json::to_vec_pretty(&manifest)?;
        fs::write(self.dir.join(MANIFEST), text)?;
        if self.target.exists() {
            let old = self.dir.with_extension("old");
            fs::rename(&self.target, &old)?;
            fs::rename(&self.dir, &self.target)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&self.dir, &self.target)?;
        }
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for Stage {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// Checks every manifest entry against the file on disk.
pub fn verify(dir: &Path) -> io::Result<bool> {
    let m: RunManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    for a in &m.artifacts {
        let bytes = fs::read(dir.join(&a.path))?;
        if sha256_hex(&bytes) != a.sha256 {
            return Ok(false);
        }
    }
    Ok(true)
}
