//! Staged output files, atomic commit and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Failure;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command_line: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputRecord>,
    pub timestamp: String,
}

/// Files are held in memory until [`Staged::commit`], so a failing command
/// leaves nothing behind.
pub struct Staged {
    out_dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
    inputs: Vec<InputDigest>,
}

impl Staged {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
            inputs: Vec::new(),
        }
    }

    /// Relative paths resolve against the output directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.out_dir.join(path)
        }
    }

    pub fn add(&mut self, path: &Path, contents: impl Into<Vec<u8>>) -> Result<(), Failure> {
        let path = self.resolve(path);
        if self.files.iter().any(|(p, _)| *p == path) {
            return Err(Failure::validation(format!("output {} is named twice", path.display())));
        }
        self.files.push((path, contents.into()));
        Ok(())
    }

    pub fn input(&mut self, role: &str, path: &str, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            role: role.into(),
            path: path.into(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Writes every staged file through a temporary sibling and a rename,
    /// then the manifest. Already-renamed files are removed if a later one fails.
    pub fn commit(self, manifest_name: &str, command_line: Vec<String>, seed: Option<u64>) -> Result<PathBuf, Failure> {
        let mut outputs = Vec::new();
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (path, bytes) in &self.files {
                write_atomic(path, bytes)?;
                written.push(path.clone());
                outputs.push(OutputRecord {
                    path: path.display().to_string(),
                    bytes: bytes.len(),
                    sha256: sha256_hex(bytes),
                });
            }
            let manifest = RunManifest {
                tool: "sawstack",
                version: env!("CARGO_PKG_VERSION"),
                command_line,
                seed,
                inputs: self.inputs,
                outputs,
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            };
            let path = self.out_dir.join(manifest_name);
            write_atomic(&path, sawstack_core::format::to_json(&manifest).as_bytes())?;
            Ok(path)
        })();
        if result.is_err() {
            for path in written {
                let _ = std::fs::remove_file(path);
            }
        }
        result
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::io(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
