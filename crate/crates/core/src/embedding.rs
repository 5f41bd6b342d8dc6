//! Embedding vectors, the embedder abstraction, and an offline lexical baseline.

use std::collections::HashMap;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub backend_id: String,
    pub model_id: String,
}

impl EmbeddingVector {
    /// Rejects empty vectors and non-finite components.
    pub fn new(
        values: Vec<f64>,
        backend_id: impl Into<String>,
        model_id: impl Into<String>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding has dimension 0".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "embedding component {i} is not finite"
            )));
        }
        Ok(EmbeddingVector {
            values,
            backend_id: backend_id.into(),
            model_id: model_id.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// A sentence-embedding backend.
///
/// `embed` returns one vector per input text, in input order, all of one
/// dimension.
pub trait Embedder: Send + Sync {
    fn backend_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed(texts)
    }
}

/// Embeds each distinct text once and returns a lookup table.
///
/// Fails if the embedder returns the wrong count or mixed dimensions.
pub fn embed_distinct<'a>(
    embedder: &dyn Embedder,
    texts: impl IntoIterator<Item = &'a str>,
) -> Result<HashMap<String, EmbeddingVector>> {
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<&'a str, ()> = HashMap::new();
    for t in texts {
        if index.insert(t, ()).is_none() {
            order.push(t.to_string());
        }
    }
    if order.is_empty() {
        return Ok(HashMap::new());
    }
    let vectors = embedder.embed(&order)?;
    if vectors.len() != order.len() {
        return Err(Error::Provider(format!(
            "embedder returned {} vectors for {} texts",
            vectors.len(),
            order.len()
        )));
    }
    let dim = vectors[0].dim();
    if vectors.iter().any(|v| v.dim() != dim) {
        return Err(Error::Provider(
            "dimension mismatch across embeddings".into(),
        ));
    }
    Ok(order.into_iter().zip(vectors).collect())
}

pub const LEXICAL_BACKEND_ID: &str = "lexical";
/// Padding character placed at both ends of the lowercased text.
pub const LEXICAL_BOUNDARY: char = '\u{2581}';
/// Seed folded into the FNV-1a offset basis before hashing each 3-gram.
pub const LEXICAL_HASH_SEED: u64 = 0x636c_7364_2d6c_6578;
pub const LEXICAL_MIN_DIM: usize = 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ LEXICAL_HASH_SEED;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Bucket for one character 3-gram in a `dim`-dimensional lexical embedding.
pub fn lexical_bucket(gram: &str, dim: usize) -> usize {
    (fnv1a(gram.as_bytes()) % dim as u64) as usize
}

/// Character 3-grams of the lowercased, boundary-padded text.
pub fn char_trigrams(text: &str) -> Vec<String> {
    let padded: Vec<char> = std::iter::once(LEXICAL_BOUNDARY)
        .chain(text.chars().flat_map(char::to_lowercase))
        .chain(std::iter::once(LEXICAL_BOUNDARY))
        .collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

/// Hashed bag of character 3-grams, L2-normalized.
///
/// An empty text has no 3-grams and maps to the unit vector at bucket 0.
///
/// # Panics
///
/// Panics if `dim < 8`.
pub fn lexical_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(
        dim >= LEXICAL_MIN_DIM,
        "lexical dimension must be at least 8"
    );
    let mut values = vec![0.0; dim];
    for gram in char_trigrams(text) {
        values[lexical_bucket(&gram, dim)] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        values[0] = 1.0;
    } else {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector {
        values,
        backend_id: LEXICAL_BACKEND_ID.into(),
        model_id: lexical_model_id(dim),
    }
}

pub fn lexical_model_id(dim: usize) -> String {
    format!("char3-fnv1a-{dim}")
}

/// Offline, deterministic [`Embedder`] backed by [`lexical_embed`].
#[derive(Debug, Clone)]
pub struct LexicalEmbedder {
    dim: usize,
    model_id: String,
}

impl LexicalEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < LEXICAL_MIN_DIM {
            return Err(Error::InvalidInput(format!(
                "lexical dimension {dim} is below {LEXICAL_MIN_DIM}"
            )));
        }
        Ok(LexicalEmbedder {
            dim,
            model_id: lexical_model_id(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for LexicalEmbedder {
    fn default() -> Self {
        LexicalEmbedder::new(512).expect("512 is a valid dimension")
    }
}

impl Embedder for LexicalEmbedder {
    fn backend_id(&self) -> &str {
        LEXICAL_BACKEND_ID
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| lexical_embed(t, self.dim)).collect())
    }
}
