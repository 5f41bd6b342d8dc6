//! Clients for the external services a CLSD run talks to: sentence
//! embeddings, chat completion and machine translation.
//!
//! Every client implements the matching trait from `clsd_core`, so the
//! pipelines never see HTTP. Offline stand-ins (lexical embeddings, scripted
//! chat, identity translation) are selected through the endpoint scheme; see
//! [`ProviderConfig`].

mod cache;
mod chat;
mod config;
mod embed;
mod http;
mod translate;

use std::path::Path;

use clsd_core::embedding::{Embedder, LexicalEmbedder};
use clsd_core::evaluator::{IdentityTranslator, Translator};
use clsd_core::generator::ChatClient;
use clsd_core::Result;

pub use cache::{cache_key, CachedEmbedder, EmbeddingCache};
pub use chat::{HttpChat, ReplayChat};
pub use config::{Endpoint, ProviderConfig, ProviderKind, RetryPolicy};
pub use embed::HttpEmbedder;
pub use translate::HttpTranslator;

/// Builds the embedder described by `cfg`. Remote embeddings go through the
/// on-disk cache when `cache_dir` is given; the lexical backend never does.
pub fn embedder_from_config(
    cfg: &ProviderConfig,
    cache_dir: Option<&Path>,
) -> Result<Box<dyn Embedder>> {
    cfg.expect_kind(ProviderKind::Embedding)?;
    match cfg.parsed_endpoint()? {
        Endpoint::Lexical(dim) => Ok(Box::new(LexicalEmbedder::new(dim)?)),
        Endpoint::Http(_) => {
            let http = HttpEmbedder::new(cfg.clone())?;
            match cache_dir {
                Some(dir) => Ok(Box::new(CachedEmbedder::new(
                    http,
                    EmbeddingCache::open(dir)?,
                ))),
                None => Ok(Box::new(http)),
            }
        }
        Endpoint::Replay(_) | Endpoint::Identity => unreachable!("rejected by validate"),
    }
}

pub fn chat_from_config(cfg: &ProviderConfig) -> Result<Box<dyn ChatClient>> {
    cfg.expect_kind(ProviderKind::Chat)?;
    match cfg.parsed_endpoint()? {
        Endpoint::Replay(path) => Ok(Box::new(
            ReplayChat::from_file(path, &cfg.model_id)?.with_max_inflight(cfg.max_inflight),
        )),
        Endpoint::Http(_) => Ok(Box::new(HttpChat::new(cfg.clone())?)),
        Endpoint::Lexical(_) | Endpoint::Identity => unreachable!("rejected by validate"),
    }
}

pub fn translator_from_config(cfg: &ProviderConfig) -> Result<Box<dyn Translator>> {
    cfg.expect_kind(ProviderKind::Translation)?;
    match cfg.parsed_endpoint()? {
        Endpoint::Identity => Ok(Box::new(IdentityTranslator)),
        Endpoint::Http(_) => Ok(Box::new(HttpTranslator::new(cfg.clone())?)),
        Endpoint::Lexical(_) | Endpoint::Replay(_) => unreachable!("rejected by validate"),
    }
}
