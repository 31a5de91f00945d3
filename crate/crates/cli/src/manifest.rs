use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
struct Artifact {
    /// Relative to the output directory, `/`-separated.
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<&'a str>,
    /// SHA-256 of the configuration file, or of the draws when no
    /// configuration was given.
    config_sha256: Option<String>,
    artifacts: Vec<Artifact>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), Failure> {
    let data = std::fs::read(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    Ok((hex(&Sha256::digest(&data)), data.len() as u64))
}

/// Records of what a command produced.
pub struct Recorder {
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(out: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(out).map_err(|e| Failure::Validation(format!("{}: {e}", out.display())))?;
        Ok(Self { out: out.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Registers an artifact already written below the output directory.
    pub fn add(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn write(self, command: &str, seed: u64, scenario: Option<&str>, config: Option<&Path>) -> Result<(), Failure> {
        let config_sha256 = config.map(|p| sha256_file(p).map(|h| h.0)).transpose()?;
        let mut artifacts = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let (sha256, bytes) = sha256_file(f)?;
            let rel = f.strip_prefix(&self.out).unwrap_or(f);
            let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            artifacts.push(Artifact { path, bytes, sha256 });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest { command, seed, scenario, config_sha256, artifacts };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        let path = self.out.join(FILE_NAME);
        std::fs::write(&path, text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
    }
}
