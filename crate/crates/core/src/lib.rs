//! Building blocks for cross-lingual semantic discrimination (CLSD) benchmarks.
//!
//! A CLSD instance pairs a source sentence with its true translation and four
//! adversarial distractors in the target language. An embedding model passes
//! the instance when the source embedding is strictly closer (by cosine) to the
//! true translation than to every distractor.
//!
//! The crate is split by pipeline stage:
//!
//! - [`datamodel`]: record types and their line-delimited JSON files
//! - [`textmetrics`]: tokenization, Levenshtein/Jaccard similarity, single-token diffs, binning
//! - [`embedding`]: embedding vectors, the [`Embedder`](embedding::Embedder) trait and a lexical baseline
//! - [`generator`]: distractor prompting, response parsing and dataset statistics
//! - [`evaluator`]: cosine ranking, Precision@1, pivot datasets and disagreement sets
//! - [`analysis`]: normalized similarity shifts, correlations and success distributions
//!
//! Remote services plug in through the [`Embedder`](embedding::Embedder),
//! [`ChatClient`](generator::ChatClient) and [`Translator`](evaluator::Translator) traits.

pub mod analysis;
pub mod datamodel;
pub mod embedding;
mod error;
pub mod evaluator;
pub mod generator;
pub mod textmetrics;

pub use error::{Error, Result};
