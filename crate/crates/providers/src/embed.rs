use clsd_core::embedding::{Embedder, EmbeddingVector};
use clsd_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Endpoint, ProviderConfig, ProviderKind};
use crate::http::{run_bounded, Transport};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    index: usize,
    embedding: Vec<f64>,
}

/// Client for an embeddings endpoint speaking the common
/// `{"model", "input"}` / `{"data": [{"index", "embedding"}]}` shape.
pub struct HttpEmbedder {
    cfg: ProviderConfig,
    transport: Transport,
}

impl HttpEmbedder {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        cfg.expect_kind(ProviderKind::Embedding)?;
        let Endpoint::Http(url) = cfg.parsed_endpoint()? else {
            return Err(Error::InvalidInput(format!(
                "{} is not an HTTP endpoint",
                cfg.endpoint
            )));
        };
        let transport = Transport::new(&cfg, url)?;
        Ok(HttpEmbedder { cfg, transport })
    }

    fn embed_chunk(&self, chunk: &[String]) -> Result<Vec<EmbeddingVector>> {
        let resp: EmbedResponse = self.transport.post(&EmbedRequest {
            model: &self.cfg.model_id,
            input: chunk,
        })?;
        if resp.data.len() != chunk.len() {
            return Err(Error::Provider(format!(
                "count mismatch: {} embeddings for {} inputs",
                resp.data.len(),
                chunk.len()
            )));
        }
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; chunk.len()];
        for item in resp.data {
            match slots.get_mut(item.index) {
                Some(slot @ None) => *slot = Some(item.embedding),
                _ => {
                    return Err(Error::Provider(format!(
                        "embedding index {} is out of range or repeated",
                        item.index
                    )))
                }
            }
        }
        slots
            .into_iter()
            .map(|v| {
                let v = EmbeddingVector::new(
                    v.expect("all slots filled"),
                    self.cfg.backend_id(),
                    &self.cfg.model_id,
                )
                .map_err(|e| Error::Provider(e.to_string()))?;
                if v.is_zero() {
                    return Err(Error::Provider(
                        "backend returned an all-zero embedding".into(),
                    ));
                }
                Ok(v)
            })
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn backend_id(&self) -> &str {
        self.cfg.backend_id()
    }

    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[String]> = texts.chunks(self.cfg.max_batch).collect();
        let out: Vec<EmbeddingVector> =
            run_bounded(&chunks, self.cfg.max_inflight, |c| self.embed_chunk(c))?
                .into_iter()
                .flatten()
                .collect();
        let dim = out[0].dim();
        if let Some(v) = out.iter().find(|v| v.dim() != dim) {
            return Err(Error::Provider(format!(
                "dimension mismatch: {} vs {dim}",
                v.dim()
            )));
        }
        Ok(out)
    }
}
