//! Content-addressed response cache: one JSON file per cache key.
//!
//! Layout under the cache directory:
//!
//! ```text
//! completions/<first two hex>/<full digest>.json   serialized CompletionResponse
//! embeddings/<first two hex>/<full digest>.json    serialized EmbeddingVector
//! ```
//!
//! Files are written atomically (temp file + rename), so concurrent writers
//! of the same key land on identical content and readers never see a torn
//! file. A present entry is authoritative: replaying a manifest offline
//! reproduces every response byte-exactly.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::util::{atomic_write, sha256_hex};

use super::types::{CacheKey, CompletionResponse, EmbeddingVector};

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    /// Opens (creating if needed) a cache rooted at `dir`.
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, namespace: &str, digest: &str) -> PathBuf {
        let shard = &digest[..2.min(digest.len())];
        self.dir.join(namespace).join(shard).join(format!("{digest}.json"))
    }

    fn read<T: serde::de::DeserializeOwned>(&self, path: &Path) -> Result<Option<T>> {
        let bytes = match std::fs::read(path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(path, e)),
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| Error::Protocol(format!("corrupt cache entry {}: {e}", path.display())))
    }

    fn write<T: serde::Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let json = serde_json::to_vec(value)
            .map_err(|e| Error::invalid(format!("serialize cache entry: {e}")))?;
        atomic_write(path, &json)
    }

    pub fn get_completion(&self, key: &CacheKey) -> Result<Option<CompletionResponse>> {
        self.read(&self.entry_path("completions", &key.digest))
    }

    pub fn put_completion(&self, key: &CacheKey, response: &CompletionResponse) -> Result<()> {
        self.write(&self.entry_path("completions", &key.digest), response)
    }

    pub fn get_embedding(&self, digest: &str) -> Result<Option<EmbeddingVector>> {
        self.read(&self.entry_path("embeddings", digest))
    }

    pub fn put_embedding(&self, digest: &str, vector: &EmbeddingVector) -> Result<()> {
        self.write(&self.entry_path("embeddings", digest), vector)
    }
}

/// Cache digest for one embedded text under one backend.
pub fn embedding_digest(backend_id: &str, text: &str) -> String {
    let material = serde_json::json!({
        "backend_id": backend_id,
        "kind": "embedding",
        "text": text,
    });
    sha256_hex(material.to_string().as_bytes())
}
