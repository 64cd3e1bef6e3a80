//! The single writer that owns an output directory and its manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config_sha256: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: Provenance,
    pub files: Vec<Entry>,
    /// Free-form notes: truncations, flags, failed checks.
    pub notes: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

pub struct Artifacts {
    dir: PathBuf,
    provenance: Provenance,
    files: Vec<Entry>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    provenance: &'a Provenance,
    data: &'a T,
}

impl Artifacts {
    pub fn create(dir: &Path, provenance: Provenance) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), provenance, files: Vec::new(), notes: Vec::new() })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Writes `name` (a bare file name) inside the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let ok = !name.is_empty()
            && name != MANIFEST
            && Path::new(name).file_name().is_some_and(|f| f == name)
            && name != ".."
            && !name.contains(['/', '\\']);
        if !ok {
            return Err(CliError::Io(format!("refusing to write {name:?} outside the output directory")));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.retain(|e| e.file != name);
        self.files.push(Entry { file: name.into(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    /// JSON with the provenance block embedded next to the payload.
    pub fn write_json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<(), CliError> {
        let v = serde_json::to_vec_pretty(&Wrapped { provenance: &self.provenance, data })
            .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.write(name, &v)
    }

    pub fn finish(self) -> Result<Manifest, CliError> {
        let m = Manifest { provenance: self.provenance, files: self.files, notes: self.notes };
        let v = serde_json::to_vec_pretty(&m).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, v).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(m)
    }
}

/// Checks every listed file against its recorded checksum.
pub fn verify(dir: &Path, m: &Manifest) -> Vec<String> {
    m.files
        .iter()
        .filter_map(|e| match std::fs::read(dir.join(&e.file)) {
            Ok(b) if hex::encode(Sha256::digest(&b)) == e.sha256 => None,
            Ok(_) => Some(format!("{}: checksum mismatch", e.file)),
            Err(err) => Some(format!("{}: {err}", e.file)),
        })
        .collect()
}
