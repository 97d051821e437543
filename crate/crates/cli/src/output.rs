//! Atomic artifact writes and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use glwalk_core::io::Table;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub code_version: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub budget: String,
    pub start_unix: f64,
    pub end_unix: f64,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::io(format!("bad manifest {}: {e}", path.display())))
    }
}

/// Output directory; every file lands via a temporary file and a rename.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write_raw(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let mut tmp = tempfile::Builder::new().prefix(".glwalk-").suffix(".tmp").tempfile_in(&self.root)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path(name)).map_err(|e| CliError::io(format!("cannot persist {name}: {e}")))?;
        Ok(())
    }

    /// Writes `bytes` to `name` and records its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.write_raw(name, bytes)?;
        self.written.retain(|f| f.name != name);
        self.written.push(FileEntry { name: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        let text = table.to_csv()?;
        self.write(name, text.as_bytes())
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.written
    }

    /// Writes `<command>.manifest.json` listing every file written so far.
    pub fn finish(&self, mut manifest: Manifest) -> Result<PathBuf, CliError> {
        manifest.files = self.written.clone();
        let name = Manifest::file_name(&manifest.command);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        self.write_raw(&name, text.as_bytes())?;
        Ok(self.path(&name))
    }
}
