//! Run manifests: enough provenance to replay a command offline.
//!
//! Every command writes one. It snapshots the effective config, digests of
//! every input and output file, the cache keys the run touched, and the
//! sampled ids where sampling happened. Re-running the command with the
//! snapshotted config against a populated cache reproduces the output
//! files byte for byte; the manifest is the receipt to check that against.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{atomic_write, sha256_hex};

use super::config::PipelineConfig;

/// A file the run read or wrote, pinned by content digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileStamp {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub created_utc: String,
    /// The effective configuration, after CLI overrides.
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, FileStamp>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub outputs: BTreeMap<String, FileStamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rubric_digest: Option<String>,
    /// Instance ids each discovery agent saw, in prompt order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_ids: Option<Vec<Vec<String>>>,
    /// Completion cache-key digests by stage.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cache_keys: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            created_utc: chrono::Utc::now().to_rfc3339(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            corpus_digest: None,
            rubric_digest: None,
            subset_ids: None,
            cache_keys: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// Digests an input file under a role name ("corpus", "rubric", ...).
    pub fn record_input(&mut self, role: &str, path: &Path) -> Result<()> {
        let stamp = stamp(path)?;
        self.inputs.insert(role.to_string(), stamp);
        Ok(())
    }

    /// Digests an output file the command just wrote.
    pub fn record_output(&mut self, role: &str, path: &Path) -> Result<()> {
        let stamp = stamp(path)?;
        self.outputs.insert(role.to_string(), stamp);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("serialize manifest: {e}")))?;
        atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("manifest {}: {e}", path.display())))
    }
}

/// Content digest of a file on disk.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn stamp(path: &Path) -> Result<FileStamp> {
    Ok(FileStamp {
        path: path.display().to_string(),
        sha256: file_digest(path)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_with_stamps() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("corpus.jsonl");
        std::fs::write(&input, b"{}\n").unwrap();

        let config = PipelineConfig::default();
        let mut manifest = RunManifest::new("discover", &config);
        manifest.record_input("corpus", &input).unwrap();
        manifest.corpus_digest = Some(file_digest(&input).unwrap());
        manifest.notes.push("one agent returned extra rows".to_string());

        let path = dir.path().join("discover.manifest.json");
        manifest.write(&path).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back.command, "discover");
        assert_eq!(back.config, config);
        assert_eq!(back.inputs["corpus"].sha256, manifest.inputs["corpus"].sha256);
        assert_eq!(back.notes.len(), 1);
        assert!(!back.tool_version.is_empty());
    }

    #[test]
    fn file_digest_changes_with_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        std::fs::write(&path, b"alpha").unwrap();
        let first = file_digest(&path).unwrap();
        std::fs::write(&path, b"beta").unwrap();
        let second = file_digest(&path).unwrap();
        assert_ne!(first, second);
        assert_eq!(first.len(), 64);
    }

    #[test]
    fn missing_file_yields_an_io_error_naming_the_path() {
        let err = file_digest(Path::new("/nonexistent/f")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/f"), "{err}");
    }
}
