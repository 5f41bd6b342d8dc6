//! Distractor generation: prompt construction, response parsing, retries and
//! dataset statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::datamodel::{ClsdInstance, Meta, ParallelPair, Sentence, NUM_DISTRACTORS};
use crate::textmetrics::{intra_distractor_jaccard, single_token_diff, text_jaccard};
use crate::{Error, Result};

/// Version tag stored in instance meta. Any wording change to
/// [`PROMPT_TEMPLATE`] must come with a new tag.
pub const PROMPT_VERSION: &str = "clsd-prompt-1";

/// `{language}` is replaced by the display name of the target language.
pub const PROMPT_TEMPLATE: &str = "Can you provide me with four tricky sentences (numbered) \
that look structurally and lexically similar but don't have the same meaning. \
The sentences should be within similar topics and share commonalities with the original. \
Answer in {language}!";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for ChatParams {
    fn default() -> Self {
        ChatParams {
            temperature: 1.0,
            top_p: 1.0,
        }
    }
}

impl ChatParams {
    pub fn check(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "top_p {} must be in (0, 1]",
                self.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// A chat-completion backend returning the assistant message verbatim.
pub trait ChatClient: Send + Sync {
    fn model_id(&self) -> &str;

    /// How many completions may be in flight at once.
    fn max_inflight(&self) -> usize {
        1
    }

    fn complete(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn max_inflight(&self) -> usize {
        (**self).max_inflight()
    }
    fn complete(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String> {
        (**self).complete(messages, params)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn max_inflight(&self) -> usize {
        (**self).max_inflight()
    }
    fn complete(&self, messages: &[ChatMessage], params: &ChatParams) -> Result<String> {
        (**self).complete(messages, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Language code to the display name used in the prompt.
    pub language_names: BTreeMap<String, String>,
    pub max_retries: u32,
    #[serde(default)]
    pub params: ChatParams,
    #[serde(default = "default_prompt_version")]
    pub prompt_version: String,
}

fn default_prompt_version() -> String {
    PROMPT_VERSION.to_string()
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            language_names: BTreeMap::from([
                ("de".to_string(), "German".to_string()),
                ("en".to_string(), "English".to_string()),
                ("fr".to_string(), "French".to_string()),
            ]),
            max_retries: 2,
            params: ChatParams::default(),
            prompt_version: default_prompt_version(),
        }
    }
}

pub fn build_prompt(target: &Sentence, cfg: &GenerationConfig) -> Result<Vec<ChatMessage>> {
    let name = cfg.language_names.get(&target.lang).ok_or_else(|| {
        Error::InvalidInput(format!("no display name for language {:?}", target.lang))
    })?;
    let content = format!(
        "{}\n{}",
        PROMPT_TEMPLATE.replace("{language}", name),
        target.text
    );
    Ok(vec![ChatMessage::user(content)])
}

static NUMBERED_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d+)[.)]\s*(.+)$").expect("valid regex"));

const QUOTES: &[char] = &['"', '\'', '“', '”', '„', '‚', '‘', '’', '«', '»', '‹', '›'];

/// Extracts items numbered `1.`–`4.` (or `1)`–`4)`) in numeric order.
///
/// Lines that are not numbered are ignored. Any other number, a repeated
/// number, a missing number or an item that is empty after quote stripping
/// is an error.
pub fn parse_distractors(response: &str) -> Result<[String; NUM_DISTRACTORS]> {
    let mut items: BTreeMap<usize, String> = BTreeMap::new();
    let mut found = 0usize;
    for line in response.lines() {
        let Some(caps) = NUMBERED_LINE.captures(line) else {
            continue;
        };
        found += 1;
        let number: usize = caps[1].parse().unwrap_or(usize::MAX);
        let text = caps[2].trim().trim_matches(QUOTES).trim().to_string();
        if !(1..=NUM_DISTRACTORS).contains(&number) {
            continue;
        }
        if text.is_empty() {
            return Err(Error::Completion(format!("item {number} is empty")));
        }
        if items.insert(number, text).is_some() {
            return Err(Error::Completion(format!(
                "item {number} appears more than once"
            )));
        }
    }
    if found != NUM_DISTRACTORS {
        return Err(Error::Completion(format!(
            "expected {NUM_DISTRACTORS} items, found {found}"
        )));
    }
    if items.len() != NUM_DISTRACTORS {
        let missing: Vec<String> = (1..=NUM_DISTRACTORS)
            .filter(|n| !items.contains_key(n))
            .map(|n| n.to_string())
            .collect();
        return Err(Error::Completion(format!(
            "missing item number(s) {}",
            missing.join(", ")
        )));
    }
    let mut values = items.into_values();
    Ok(std::array::from_fn(|_| values.next().expect("four items")))
}

/// Renders items the way the parser expects them: `1. …\n2. …`.
pub fn format_numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: ClsdInstance,
    pub attempts: u32,
}

#[derive(Debug)]
pub struct InstanceFailure {
    pub attempts: u32,
    pub last_error: Error,
}

impl std::fmt::Display for InstanceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "exhausted retries after {} attempt(s): {}",
            self.attempts, self.last_error
        )
    }
}

fn reject_copies(target: &str, items: &[String; NUM_DISTRACTORS]) -> Result<()> {
    let target = target.trim();
    if let Some(i) = items.iter().position(|d| d.trim() == target) {
        return Err(Error::Completion(format!(
            "item {} repeats the target",
            i + 1
        )));
    }
    Ok(())
}

/// Asks the chat model for four distractors of `pair.target`.
///
/// A response is rejected (and the request repeated, up to `max_retries`
/// extra attempts) when it cannot be parsed, when an item repeats the target
/// verbatim, or when the provider call fails.
pub fn generate_instance(
    pair: &ParallelPair,
    client: &dyn ChatClient,
    cfg: &GenerationConfig,
    seed: u64,
) -> std::result::Result<Generated, InstanceFailure> {
    let messages = build_prompt(&pair.target, cfg).map_err(|e| InstanceFailure {
        attempts: 0,
        last_error: e,
    })?;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let outcome = client
            .complete(&messages, &cfg.params)
            .and_then(|response| parse_distractors(&response))
            .and_then(|items| reject_copies(&pair.target.text, &items).map(|()| items));
        match outcome {
            Ok(items) => {
                let meta = Meta::from([
                    ("model_id".to_string(), client.model_id().to_string()),
                    ("prompt_version".to_string(), cfg.prompt_version.clone()),
                    ("seed".to_string(), seed.to_string()),
                ]);
                let instance = ClsdInstance {
                    id: pair.id.clone(),
                    source: pair.source.clone(),
                    target: pair.target.clone(),
                    distractors: items
                        .into_iter()
                        .map(|t| Sentence::new(t, pair.target.lang.clone()))
                        .collect(),
                    meta,
                };
                return Ok(Generated { instance, attempts });
            }
            Err(e) if attempts <= cfg.max_retries => {
                debug!("pair {}: attempt {attempts} rejected: {e}", pair.id);
            }
            Err(e) => {
                return Err(InstanceFailure {
                    attempts,
                    last_error: e,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipEntry {
    pub index: usize,
    pub pair_id: String,
    pub reason: String,
}

impl std::fmt::Display for SkipEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pair {}: exhausted retries", self.pair_id)
    }
}

/// One line of the generation run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairLog {
    pub index: usize,
    pub pair_id: String,
    pub outcome: PairOutcome,
    pub attempts: u32,
    pub latency_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairOutcome {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, Default)]
pub struct GenerationRun {
    pub instances: Vec<ClsdInstance>,
    pub skipped: Vec<SkipEntry>,
    pub log: Vec<PairLog>,
}

type Outcome = (std::result::Result<Generated, InstanceFailure>, u64);

/// Generates one instance per pair, running up to `client.max_inflight()`
/// pairs concurrently. Output follows corpus order. Pairs whose retries run
/// out are skipped and logged, never filled in.
pub fn generate_dataset(
    corpus: &[ParallelPair],
    client: &dyn ChatClient,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<GenerationRun> {
    cfg.params.check()?;
    let langs: BTreeSet<&str> = corpus.iter().map(|p| p.target.lang.as_str()).collect();
    if let Some(missing) = langs.iter().find(|l| !cfg.language_names.contains_key(**l)) {
        return Err(Error::InvalidInput(format!(
            "generation config has no display name for target language {missing:?}"
        )));
    }

    let outcomes: Mutex<Vec<Option<Outcome>>> =
        Mutex::new((0..corpus.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = client.max_inflight().clamp(1, corpus.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(pair) = corpus.get(i) else { break };
                let started = Instant::now();
                let outcome = generate_instance(pair, client, cfg, seed);
                let latency = started.elapsed().as_millis() as u64;
                outcomes.lock().expect("outcome lock")[i] = Some((outcome, latency));
            });
        }
    });

    let mut run = GenerationRun::default();
    for (index, slot) in outcomes
        .into_inner()
        .expect("outcome lock")
        .into_iter()
        .enumerate()
    {
        let (outcome, latency_ms) = slot.expect("every pair processed");
        let pair_id = corpus[index].id.clone();
        match outcome {
            Ok(g) => {
                run.log.push(PairLog {
                    index,
                    pair_id,
                    outcome: PairOutcome::Ok,
                    attempts: g.attempts,
                    latency_ms,
                    error: None,
                });
                run.instances.push(g.instance);
            }
            Err(failure) => {
                warn!("pair {pair_id} skipped: {failure}");
                run.log.push(PairLog {
                    index,
                    pair_id: pair_id.clone(),
                    outcome: PairOutcome::Skipped,
                    attempts: failure.attempts,
                    latency_ms,
                    error: Some(failure.last_error.to_string()),
                });
                run.skipped.push(SkipEntry {
                    index,
                    pair_id,
                    reason: failure.to_string(),
                });
            }
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_instances: usize,
    pub n_distractors: usize,
    /// Mean word-level Jaccard between each target and its distractors.
    pub jaccard_mean: f64,
    /// Population standard deviation of the same values.
    pub jaccard_std: f64,
    /// Distractors per target language.
    pub distractors_per_lang: BTreeMap<String, usize>,
    /// Target/distractor pairs that differ by exactly one token, per target language.
    pub single_diff_count: BTreeMap<String, usize>,
    /// Mean intra-distractor Jaccard over all distractors.
    pub intra_jaccard_mean: f64,
}

pub fn dataset_stats(instances: &[ClsdInstance]) -> Result<StatsReport> {
    if instances.is_empty() {
        return Err(Error::InvalidInput(
            "cannot summarize an empty dataset".into(),
        ));
    }
    let mut jaccards = Vec::with_capacity(instances.len() * NUM_DISTRACTORS);
    let mut intra = Vec::with_capacity(instances.len() * NUM_DISTRACTORS);
    let mut per_lang: BTreeMap<String, usize> = BTreeMap::new();
    let mut single: BTreeMap<String, usize> = BTreeMap::new();
    for inst in instances {
        let texts: [&str; NUM_DISTRACTORS] = inst
            .distractors
            .iter()
            .map(|d| d.text.as_str())
            .collect::<Vec<_>>()
            .try_into()
            .map_err(|_| Error::Invariant {
                id: inst.id.clone(),
                rule: crate::datamodel::RULE_DISTRACTOR_COUNT.into(),
            })?;
        let lang = &inst.target.lang;
        single.entry(lang.clone()).or_default();
        for d in texts {
            jaccards.push(text_jaccard(&inst.target.text, d));
            *per_lang.entry(lang.clone()).or_default() += 1;
            if single_token_diff(&inst.target.text, d).is_some() {
                *single.entry(lang.clone()).or_default() += 1;
            }
        }
        intra.extend(intra_distractor_jaccard(&texts));
    }
    let n = jaccards.len() as f64;
    let mean = jaccards.iter().sum::<f64>() / n;
    let var = jaccards.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / n;
    Ok(StatsReport {
        n_instances: instances.len(),
        n_distractors: jaccards.len(),
        jaccard_mean: mean,
        jaccard_std: var.sqrt(),
        distractors_per_lang: per_lang,
        single_diff_count: single,
        intra_jaccard_mean: intra.iter().sum::<f64>() / intra.len() as f64,
    })
}
