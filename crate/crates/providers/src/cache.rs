//! Content-addressed embedding cache.
//!
//! Layout under the cache directory:
//!
//! ```text
//! entries/<sha256 hex>   raw little-endian f64 components
//! manifest.jsonl         one line per stored entry: key, backend, model, dim
//! ```
//!
//! Entries are written to a temporary file and renamed into place, so a
//! crash leaves either the complete entry or none. The manifest is an
//! append-only index for humans and tooling; lookups never depend on it.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use clsd_core::embedding::{Embedder, EmbeddingVector};
use clsd_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tracing::warn;

#[derive(Serialize)]
struct ManifestLine<'a> {
    key: &'a str,
    backend_id: &'a str,
    model_id: &'a str,
    dim: usize,
}

/// Hex SHA-256 over the length-prefixed backend id, model id and text.
pub fn cache_key(backend_id: &str, model_id: &str, text: &str) -> String {
    let mut h = Sha256::new();
    for part in [backend_id, model_id, text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug)]
pub struct EmbeddingCache {
    root: PathBuf,
    entries: PathBuf,
    write_lock: Mutex<()>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl EmbeddingCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let entries = root.join("entries");
        fs::create_dir_all(&entries).map_err(|e| io_err(&entries, e))?;
        Ok(EmbeddingCache {
            root,
            entries,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.entries.join(key)
    }

    /// Returns `None` for absent entries and for unreadable or malformed
    /// ones, which are then recomputed and overwritten.
    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!(path = %path.display(), error = %e, "unreadable cache entry");
                return None;
            }
        };
        if bytes.is_empty() || bytes.len() % 8 != 0 {
            warn!(path = %path.display(), len = bytes.len(), "malformed cache entry");
            return None;
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            warn!(path = %path.display(), "non-finite cache entry");
            return None;
        }
        Some(values)
    }

    pub fn put(&self, key: &str, vector: &EmbeddingVector) -> Result<()> {
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let path = self.entry_path(key);
        let bytes: Vec<u8> = vector.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let mut tmp =
            tempfile::NamedTempFile::new_in(&self.entries).map_err(|e| io_err(&self.entries, e))?;
        tmp.write_all(&bytes).map_err(|e| io_err(tmp.path(), e))?;
        tmp.as_file()
            .sync_all()
            .map_err(|e| io_err(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;

        let manifest = self.manifest_path();
        let mut line = serde_json::to_string(&ManifestLine {
            key,
            backend_id: &vector.backend_id,
            model_id: &vector.model_id,
            dim: vector.dim(),
        })?;
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&manifest)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| io_err(&manifest, e))
    }
}

/// Wraps an [`Embedder`] with a memory layer and an [`EmbeddingCache`].
///
/// Only texts missing from both layers reach the inner embedder, in one call
/// per `embed` with duplicates removed.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: EmbeddingCache,
    memory: RwLock<HashMap<String, EmbeddingVector>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, cache: EmbeddingCache) -> Self {
        CachedEmbedder {
            inner,
            cache,
            memory: RwLock::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn lookup(&self, key: &str) -> Option<EmbeddingVector> {
        if let Some(v) = self.memory.read().expect("cache lock poisoned").get(key) {
            return Some(v.clone());
        }
        let values = self.cache.get(key)?;
        let v =
            EmbeddingVector::new(values, self.inner.backend_id(), self.inner.model_id()).ok()?;
        self.memory
            .write()
            .expect("cache lock poisoned")
            .insert(key.to_string(), v.clone());
        Some(v)
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let keys: Vec<String> = texts
            .iter()
            .map(|t| cache_key(self.backend_id(), self.model_id(), t))
            .collect();
        let mut found: HashMap<&str, EmbeddingVector> = HashMap::new();
        let mut missing: Vec<(&str, &String)> = Vec::new();
        for (key, text) in keys.iter().zip(texts) {
            if found.contains_key(key.as_str()) || missing.iter().any(|(k, _)| k == key) {
                continue;
            }
            match self.lookup(key) {
                Some(v) => {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    found.insert(key, v);
                }
                None => missing.push((key, text)),
            }
        }
        if !missing.is_empty() {
            self.misses.fetch_add(missing.len(), Ordering::Relaxed);
            let batch: Vec<String> = missing.iter().map(|(_, t)| (*t).clone()).collect();
            let fresh = self.inner.embed(&batch)?;
            if fresh.len() != batch.len() {
                return Err(Error::Provider(format!(
                    "count mismatch: {} embeddings for {} inputs",
                    fresh.len(),
                    batch.len()
                )));
            }
            let mut memory = self.memory.write().expect("cache lock poisoned");
            for ((key, _), v) in missing.iter().zip(fresh) {
                self.cache.put(key, &v)?;
                memory.insert(key.to_string(), v.clone());
                found.insert(key, v);
            }
        }
        let out: Vec<EmbeddingVector> = keys.iter().map(|k| found[k.as_str()].clone()).collect();
        if let Some(first) = out.first() {
            if out.iter().any(|v| v.dim() != first.dim()) {
                return Err(Error::Provider(
                    "dimension mismatch between cached and fresh embeddings".into(),
                ));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clsd_core::embedding::LexicalEmbedder;

    struct Counting {
        inner: LexicalEmbedder,
        calls: AtomicUsize,
        texts: AtomicUsize,
    }

    impl Embedder for Counting {
        fn backend_id(&self) -> &str {
            "counting"
        }
        fn model_id(&self) -> &str {
            "lex16"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.texts.fetch_add(texts.len(), Ordering::Relaxed);
            self.inner.embed(texts)
        }
    }

    fn counting() -> Counting {
        Counting {
            inner: LexicalEmbedder::new(16).unwrap(),
            calls: AtomicUsize::new(0),
            texts: AtomicUsize::new(0),
        }
    }

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn key_separates_fields() {
        assert_ne!(cache_key("ab", "c", "d"), cache_key("a", "bc", "d"));
        assert_eq!(cache_key("a", "b", "c").len(), 64);
    }

    #[test]
    fn second_call_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let emb = CachedEmbedder::new(counting(), EmbeddingCache::open(dir.path()).unwrap());
        let first = emb.embed(&strings(&["x", "y", "x"])).unwrap();
        assert_eq!(emb.inner.texts.load(Ordering::Relaxed), 2);
        let second = emb.embed(&strings(&["y", "x"])).unwrap();
        assert_eq!(emb.inner.calls.load(Ordering::Relaxed), 1);
        assert_eq!(second[1], first[0]);
        assert_eq!(first[0], first[2]);
    }

    #[test]
    fn entries_survive_a_new_process() {
        let dir = tempfile::tempdir().unwrap();
        let a = CachedEmbedder::new(counting(), EmbeddingCache::open(dir.path()).unwrap());
        let v1 = a.embed(&strings(&["Straße"])).unwrap();
        let b = CachedEmbedder::new(counting(), EmbeddingCache::open(dir.path()).unwrap());
        let v2 = b.embed(&strings(&["Straße"])).unwrap();
        assert_eq!(b.inner.calls.load(Ordering::Relaxed), 0);
        assert_eq!(v1[0].values, v2[0].values);
        let manifest = fs::read_to_string(a.cache.manifest_path()).unwrap();
        assert_eq!(manifest.lines().count(), 1);
    }

    #[test]
    fn truncated_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let emb = CachedEmbedder::new(counting(), EmbeddingCache::open(dir.path()).unwrap());
        let key = cache_key("counting", "lex16", "z");
        fs::write(dir.path().join("entries").join(&key), [1u8, 2, 3]).unwrap();
        let v = emb.embed(&strings(&["z"])).unwrap();
        assert_eq!(emb.inner.calls.load(Ordering::Relaxed), 1);
        assert_eq!(v[0].dim(), 16);
        assert_eq!(emb.cache.get(&key).unwrap(), v[0].values);
    }
}
