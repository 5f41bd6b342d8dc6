use clsd_core::evaluator::Translator;
use clsd_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Endpoint, ProviderConfig, ProviderKind};
use crate::http::{run_bounded, Transport};

#[derive(Serialize)]
struct TranslateRequest<'a> {
    model: &'a str,
    src: &'a str,
    tgt: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct TranslateResponse {
    translations: Vec<String>,
}

/// Client for a translation endpoint taking
/// `{"model", "src", "tgt", "texts"}` and answering `{"translations": [...]}`.
pub struct HttpTranslator {
    cfg: ProviderConfig,
    transport: Transport,
}

impl HttpTranslator {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        cfg.expect_kind(ProviderKind::Translation)?;
        let Endpoint::Http(url) = cfg.parsed_endpoint()? else {
            return Err(Error::InvalidInput(format!(
                "{} is not an HTTP endpoint",
                cfg.endpoint
            )));
        };
        let transport = Transport::new(&cfg, url)?;
        Ok(HttpTranslator { cfg, transport })
    }

    fn translate_chunk(&self, chunk: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        let resp: TranslateResponse = self.transport.post(&TranslateRequest {
            model: &self.cfg.model_id,
            src,
            tgt,
            texts: chunk,
        })?;
        if resp.translations.len() != chunk.len() {
            return Err(Error::Provider(format!(
                "count mismatch: {} translations for {} inputs",
                resp.translations.len(),
                chunk.len()
            )));
        }
        Ok(resp.translations)
    }
}

impl Translator for HttpTranslator {
    fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        if src == tgt {
            return Err(Error::InvalidInput(format!(
                "source and target language are both {src:?}"
            )));
        }
        let chunks: Vec<&[String]> = texts.chunks(self.cfg.max_batch).collect();
        Ok(run_bounded(&chunks, self.cfg.max_inflight, |c| {
            self.translate_chunk(c, src, tgt)
        })?
        .into_iter()
        .flatten()
        .collect())
    }
}
