//! Cosine ranking, Precision@1, pivot datasets and disagreement sets.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use tracing::warn;

use crate::datamodel::{ClsdInstance, Meta, PivotInstance, Sentence, NUM_DISTRACTORS};
use crate::embedding::{embed_distinct, Embedder, EmbeddingVector};
use crate::{Error, Result};

/// Cosine of two raw vectors, clamped to `[-1, 1]`.
pub fn cosine_slices(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidInput("cosine of a zero vector".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    cosine_slices(&u.values, &v.values)
}

/// Anything that can be scored: a source, a true target and four distractors.
pub trait Candidates {
    const MODE: EvalMode;
    /// Id used in reports. Pivot instances report their original id.
    fn result_id(&self) -> &str;
    fn source(&self) -> &Sentence;
    fn target(&self) -> &Sentence;
    fn distractors(&self) -> &[Sentence];
}

impl Candidates for ClsdInstance {
    const MODE: EvalMode = EvalMode::Direct;
    fn result_id(&self) -> &str {
        &self.id
    }
    fn source(&self) -> &Sentence {
        &self.source
    }
    fn target(&self) -> &Sentence {
        &self.target
    }
    fn distractors(&self) -> &[Sentence] {
        &self.distractors
    }
}

impl Candidates for PivotInstance {
    const MODE: EvalMode = EvalMode::Pivot;
    fn result_id(&self) -> &str {
        &self.original_id
    }
    fn source(&self) -> &Sentence {
        &self.source
    }
    fn target(&self) -> &Sentence {
        &self.target
    }
    fn distractors(&self) -> &[Sentence] {
        &self.distractors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Direct,
    Pivot,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalMode::Direct => "direct",
            EvalMode::Pivot => "pivot",
        })
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn ser_round6<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round6(*x))
}

fn ser_round6_array<S: Serializer>(
    xs: &[f64; NUM_DISTRACTORS],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    xs.map(round6).serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: String,
    #[serde(serialize_with = "ser_round6")]
    pub sim_target: f64,
    #[serde(serialize_with = "ser_round6_array")]
    pub sim_distractors: [f64; NUM_DISTRACTORS],
    pub rank_of_target: usize,
    pub success: bool,
}

impl InstanceResult {
    /// Success needs the target strictly above every distractor; a tied
    /// distractor outranks the target.
    pub fn from_sims(
        id: impl Into<String>,
        sim_target: f64,
        sim_distractors: [f64; NUM_DISTRACTORS],
    ) -> Self {
        let beaten_by = sim_distractors.iter().filter(|&&d| d >= sim_target).count();
        InstanceResult {
            id: id.into(),
            sim_target,
            sim_distractors,
            rank_of_target: 1 + beaten_by,
            success: beaten_by == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_id: String,
    pub backend_id: String,
    pub model_id: String,
    pub mode: EvalMode,
    pub n: usize,
    #[serde(serialize_with = "ser_round6")]
    pub p_at_1: f64,
    pub results: Vec<InstanceResult>,
}

impl EvalReport {
    pub fn successes(&self) -> impl Iterator<Item = &str> {
        self.results
            .iter()
            .filter(|r| r.success)
            .map(|r| r.id.as_str())
    }

    /// Checks the counts and per-result fields of a report read from disk.
    pub fn check(&self) -> Result<()> {
        let bad = |rule: String| Error::Invariant {
            id: self.dataset_id.clone(),
            rule,
        };
        if self.n != self.results.len() {
            return Err(bad(format!(
                "n = {} but {} results",
                self.n,
                self.results.len()
            )));
        }
        if self.n == 0 {
            return Err(bad("report has no results".into()));
        }
        for r in &self.results {
            if !(1..=NUM_DISTRACTORS + 1).contains(&r.rank_of_target) {
                return Err(bad(format!("result {}: rank out of range", r.id)));
            }
            if r.success != (r.rank_of_target == 1) {
                return Err(bad(format!("result {}: success disagrees with rank", r.id)));
            }
        }
        let expected = self.successes().count() as f64 / self.n as f64;
        if (expected - self.p_at_1).abs() > 1e-6 {
            return Err(bad(format!(
                "p_at_1 {} does not match {} successes of {}",
                self.p_at_1,
                self.successes().count(),
                self.n
            )));
        }
        Ok(())
    }
}

pub fn write_report<W: Write>(mut writer: W, report: &EvalReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writer
        .write_all(b"\n")
        .map_err(|e| Error::io("<writer>", e))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    report.check()?;
    Ok(report)
}

fn candidate_texts<C: Candidates>(item: &C) -> impl Iterator<Item = &str> {
    std::iter::once(item.source().text.as_str())
        .chain(std::iter::once(item.target().text.as_str()))
        .chain(item.distractors().iter().map(|d| d.text.as_str()))
}

fn result_from_table<C: Candidates>(
    item: &C,
    table: &HashMap<String, EmbeddingVector>,
) -> Result<InstanceResult> {
    if item.distractors().len() != NUM_DISTRACTORS {
        return Err(Error::Invariant {
            id: item.result_id().to_string(),
            rule: crate::datamodel::RULE_DISTRACTOR_COUNT.into(),
        });
    }
    let lookup = |text: &str| {
        table
            .get(text)
            .ok_or_else(|| Error::Provider(format!("missing embedding for {text:?}")))
    };
    let source = lookup(&item.source().text)?;
    let sim_target = cosine(source, lookup(&item.target().text)?)?;
    let mut sims = [0.0; NUM_DISTRACTORS];
    for (slot, d) in sims.iter_mut().zip(item.distractors()) {
        *slot = cosine(source, lookup(&d.text)?)?;
    }
    Ok(InstanceResult::from_sims(
        item.result_id(),
        sim_target,
        sims,
    ))
}

pub fn score_instance<C: Candidates>(embedder: &dyn Embedder, item: &C) -> Result<InstanceResult> {
    let table = embed_distinct(embedder, candidate_texts(item))?;
    result_from_table(item, &table)
}

/// Scores every instance; distinct texts are embedded once in a single batch.
pub fn evaluate<C: Candidates>(
    embedder: &dyn Embedder,
    dataset_id: &str,
    dataset: &[C],
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput(
            "cannot evaluate an empty dataset".into(),
        ));
    }
    let table = embed_distinct(embedder, dataset.iter().flat_map(candidate_texts))?;
    let results = dataset
        .iter()
        .map(|item| result_from_table(item, &table))
        .collect::<Result<Vec<_>>>()?;
    let successes = results.iter().filter(|r| r.success).count();
    Ok(EvalReport {
        dataset_id: dataset_id.to_string(),
        backend_id: embedder.backend_id().to_string(),
        model_id: embedder.model_id().to_string(),
        mode: C::MODE,
        n: results.len(),
        p_at_1: successes as f64 / results.len() as f64,
        results,
    })
}

/// A machine-translation backend. Returns one translation per input, in order.
pub trait Translator: Send + Sync {
    fn model_id(&self) -> &str;
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>>;
}

impl<T: Translator + ?Sized> Translator for &T {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        (**self).translate(texts, src, tgt)
    }
}

impl<T: Translator + ?Sized> Translator for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        (**self).translate(texts, src, tgt)
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn model_id(&self) -> &str {
        "identity"
    }

    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        if src == tgt {
            return Err(Error::InvalidInput(format!(
                "source and target language are both {src:?}"
            )));
        }
        Ok(texts.to_vec())
    }
}

fn translate_checked(
    translator: &dyn Translator,
    texts: &[String],
    src: &str,
    tgt: &str,
) -> Result<Vec<String>> {
    let out = translator.translate(texts, src, tgt)?;
    if out.len() != texts.len() {
        return Err(Error::Provider(format!(
            "count mismatch: {} translations for {} inputs",
            out.len(),
            texts.len()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PivotSkip {
    pub original_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PivotRun {
    pub instances: Vec<PivotInstance>,
    pub skipped: Vec<PivotSkip>,
}

/// Translates source, target and distractors of every instance into `pivot_lang`.
///
/// Texts are batched per source language over the whole dataset. When a
/// batch fails, the affected instances are retried one by one and only the
/// ones that still fail are skipped.
pub fn pivot_dataset(
    dataset: &[ClsdInstance],
    translator: &dyn Translator,
    pivot_lang: &str,
) -> Result<PivotRun> {
    if !crate::datamodel::is_valid_lang(pivot_lang) {
        return Err(Error::InvalidInput(format!(
            "pivot language {pivot_lang:?} is not a two-letter code"
        )));
    }
    if let Some(inst) = dataset
        .iter()
        .find(|i| i.source.lang == pivot_lang || i.target.lang == pivot_lang)
    {
        return Err(Error::InvalidInput(format!(
            "pivot language {pivot_lang} coincides with a language of instance {}",
            inst.id
        )));
    }

    // (lang, text) -> translation, filled by bulk calls where possible.
    let mut by_lang: Vec<(&str, Vec<String>)> = Vec::new();
    for inst in dataset {
        for (lang, texts) in [
            (inst.source.lang.as_str(), vec![inst.source.text.clone()]),
            (
                inst.target.lang.as_str(),
                candidate_texts(inst).skip(1).map(str::to_string).collect(),
            ),
        ] {
            match by_lang.iter_mut().find(|(l, _)| *l == lang) {
                Some((_, v)) => v.extend(texts),
                None => by_lang.push((lang, texts)),
            }
        }
    }
    let mut translated: HashMap<(String, String), String> = HashMap::new();
    for (lang, mut texts) in by_lang {
        let mut seen = std::collections::HashSet::new();
        texts.retain(|t| seen.insert(t.clone()));
        match translate_checked(translator, &texts, lang, pivot_lang) {
            Ok(out) => {
                for (src, dst) in texts.into_iter().zip(out) {
                    translated.insert((lang.to_string(), src), dst);
                }
            }
            Err(e) => warn!("bulk translation from {lang} failed, retrying per instance: {e}"),
        }
    }

    let mut run = PivotRun::default();
    for inst in dataset {
        match pivot_instance(inst, translator, pivot_lang, &translated) {
            Ok(p) => run.instances.push(p),
            Err(e) => {
                warn!("instance {} skipped: {e}", inst.id);
                run.skipped.push(PivotSkip {
                    original_id: inst.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(run)
}

fn pivot_instance(
    inst: &ClsdInstance,
    translator: &dyn Translator,
    pivot_lang: &str,
    cache: &HashMap<(String, String), String>,
) -> Result<PivotInstance> {
    let lookup = |lang: &str, texts: &[String]| -> Option<Vec<String>> {
        texts
            .iter()
            .map(|t| cache.get(&(lang.to_string(), t.clone())).cloned())
            .collect()
    };
    let source_in = [inst.source.text.clone()];
    let source = match lookup(&inst.source.lang, &source_in) {
        Some(v) => v,
        None => translate_checked(translator, &source_in, &inst.source.lang, pivot_lang)?,
    };
    let cands_in: Vec<String> = candidate_texts(inst).skip(1).map(str::to_string).collect();
    let cands = match lookup(&inst.target.lang, &cands_in) {
        Some(v) => v,
        None => translate_checked(translator, &cands_in, &inst.target.lang, pivot_lang)?,
    };
    let sentence = |t: &String| Sentence::new(t.clone(), pivot_lang);
    let mut meta: Meta = inst.meta.clone();
    meta.insert("translator".into(), translator.model_id().to_string());
    let pivot = PivotInstance {
        original_id: inst.id.clone(),
        pivot_lang: pivot_lang.to_string(),
        source: sentence(&source[0]),
        target: sentence(&cands[0]),
        distractors: cands[1..].iter().map(sentence).collect(),
        meta,
    };
    if let Some(rule) = pivot.violations().into_iter().next() {
        return Err(Error::Invariant {
            id: inst.id.clone(),
            rule: format!("after translation: {rule}"),
        });
    }
    Ok(pivot)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub success_a_only: Vec<String>,
    pub success_b_only: Vec<String>,
}

/// Ids that succeed in one report but not the other, each list sorted.
pub fn disagreement(a: &EvalReport, b: &EvalReport) -> Result<Disagreement> {
    let ids = |r: &EvalReport| {
        r.results
            .iter()
            .map(|x| x.id.clone())
            .collect::<BTreeSet<_>>()
    };
    if ids(a) != ids(b) {
        return Err(Error::InvalidInput(
            "reports cover different instances".into(),
        ));
    }
    let sa: BTreeSet<&str> = a.successes().collect();
    let sb: BTreeSet<&str> = b.successes().collect();
    Ok(Disagreement {
        success_a_only: sa.difference(&sb).map(|s| s.to_string()).collect(),
        success_b_only: sb.difference(&sa).map(|s| s.to_string()).collect(),
    })
}
