use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fail::{Failure, Outcome};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command and check that it read the same inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Fully resolved arguments, including any seed taken from the environment.
    pub args: serde_json::Value,
    pub config: Option<serde_json::Value>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub jobs: usize,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> Outcome<String> {
    let bytes = fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

pub fn digest(path: &Path) -> Outcome<FileDigest> {
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_file(path)?,
    })
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| Failure::input(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Collects output files as a command writes them.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

impl Outputs {
    pub fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Outcome<()> {
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    pub fn write_with(
        &mut self,
        path: PathBuf,
        f: impl FnOnce(&mut Vec<u8>) -> ledgercluster::Result<()>,
    ) -> Outcome<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(path, &buf)
    }

    pub fn digests(&self) -> Outcome<Vec<FileDigest>> {
        self.files.iter().map(|p| digest(p)).collect()
    }
}

pub fn read_manifest(path: &Path) -> Outcome<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: malformed manifest: {e}", path.display())))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Failure::input(format!(
            "{}: unsupported manifest schema version {}",
            path.display(),
            m.schema_version
        )));
    }
    Ok(m)
}

/// Fails when any recorded input no longer has the recorded digest.
pub fn check_inputs(m: &RunManifest) -> Outcome<()> {
    for input in &m.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(Failure::input(format!(
                "{} changed since the run (sha256 {} != {})",
                input.path.display(),
                now,
                input.sha256
            )));
        }
    }
    Ok(())
}
