//! Content digests of each stage's configuration, inputs and outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    std::fs::read(path).map(|b| sha256_hex(&b))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_digest: String,
    /// Input label to digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path, relative to the output directory, to digest.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    /// A missing or unreadable manifest is treated as empty, so every stage reruns.
    pub fn load(out_dir: &Path) -> Manifest {
        let path = out_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|e| {
                log::warn!("ignoring unreadable manifest {}: {e}", path.display());
                Manifest::default()
            }),
            Err(_) => Manifest::default(),
        }
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }

    /// Whether the recorded run of `stage` is still current: same config,
    /// same inputs, and every output present and unmodified.
    pub fn is_current(
        &self,
        stage: &str,
        config_digest: &str,
        inputs: &BTreeMap<String, String>,
        out_dir: &Path,
    ) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.config_digest == config_digest
            && &rec.inputs == inputs
            && !rec.outputs.is_empty()
            && rec
                .outputs
                .iter()
                .all(|(rel, digest)| sha256_file(&out_dir.join(rel)).is_ok_and(|d| &d == digest))
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn currency_tracks_outputs_and_inputs() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a/out.tsv"), b"x").unwrap();
        let inputs: BTreeMap<String, String> = [("in".to_string(), "d1".to_string())].into();
        let mut m = Manifest::default();
        m.stages.insert(
            "a".into(),
            StageRecord {
                config_digest: "c".into(),
                inputs: inputs.clone(),
                outputs: [("a/out.tsv".to_string(), sha256_hex(b"x"))].into(),
            },
        );
        assert!(m.is_current("a", "c", &inputs, dir.path()));
        assert!(!m.is_current("a", "other", &inputs, dir.path()));
        assert!(!m.is_current("b", "c", &inputs, dir.path()));
        let changed: BTreeMap<String, String> = [("in".to_string(), "d2".to_string())].into();
        assert!(!m.is_current("a", "c", &changed, dir.path()));
        std::fs::write(dir.path().join("a/out.tsv"), b"y").unwrap();
        assert!(!m.is_current("a", "c", &inputs, dir.path()));

        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()), m);
    }
}
