//! Record types and their line-delimited JSON serialization.
//!
//! Every file handled here holds one JSON object per line, `\n`-terminated,
//! with keys in a fixed order. Serializing the same values twice yields the
//! same bytes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of distractors carried by every CLSD instance.
pub const NUM_DISTRACTORS: usize = 4;

pub const RULE_DISTRACTOR_COUNT: &str = "length(distractors)=4";
pub const RULE_DISTRACTOR_EQUALS_TARGET: &str = "distractor equals target";

pub type Meta = BTreeMap<String, String>;

/// Returns true for lowercase two-letter ISO 639-1 style codes.
pub fn is_valid_lang(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_lowercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub text: String,
    pub lang: String,
}

impl Sentence {
    pub fn new(text: impl Into<String>, lang: impl Into<String>) -> Self {
        Sentence {
            text: text.into(),
            lang: lang.into(),
        }
    }

    fn violations(&self, role: &str, out: &mut Vec<String>) {
        if self.text.trim().is_empty() {
            out.push(format!("{role} text is empty"));
        }
        if !is_valid_lang(&self.lang) {
            out.push(format!(
                "{role} language {:?} is not a two-letter code",
                self.lang
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    pub id: String,
    pub source: Sentence,
    pub target: Sentence,
}

impl ParallelPair {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.source.violations("source", &mut out);
        self.target.violations("target", &mut out);
        if self.source.lang == self.target.lang {
            out.push("source and target languages must differ".to_string());
        }
        out
    }
}

/// A source sentence, its true translation and four same-language distractors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClsdInstance {
    pub id: String,
    pub source: Sentence,
    pub target: Sentence,
    pub distractors: Vec<Sentence>,
    pub meta: Meta,
}

impl ClsdInstance {
    /// All invariant violations, in a stable order. Empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.source.violations("source", &mut out);
        self.target.violations("target", &mut out);
        if self.source.lang == self.target.lang {
            out.push("source and target languages must differ".to_string());
        }
        candidate_violations(&self.target, &self.distractors, true, &mut out);
        out
    }
}

fn candidate_violations(
    target: &Sentence,
    distractors: &[Sentence],
    distinct_from_target: bool,
    out: &mut Vec<String>,
) {
    if distractors.len() != NUM_DISTRACTORS {
        out.push(RULE_DISTRACTOR_COUNT.to_string());
    }
    let target_text = target.text.trim();
    for (i, d) in distractors.iter().enumerate() {
        d.violations(&format!("distractor {i}"), out);
        if d.lang != target.lang {
            out.push(format!(
                "distractor {i} language differs from target language"
            ));
        }
        if distinct_from_target && d.text.trim() == target_text {
            out.push(RULE_DISTRACTOR_EQUALS_TARGET.to_string());
        }
    }
}

/// A CLSD instance with every sentence translated into a pivot language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotInstance {
    pub original_id: String,
    pub pivot_lang: String,
    pub source: Sentence,
    pub target: Sentence,
    pub distractors: Vec<Sentence>,
    pub meta: Meta,
}

impl PivotInstance {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !is_valid_lang(&self.pivot_lang) {
            out.push(format!(
                "pivot language {:?} is not a two-letter code",
                self.pivot_lang
            ));
        }
        self.source.violations("source", &mut out);
        self.target.violations("target", &mut out);
        if self.source.lang != self.pivot_lang || self.target.lang != self.pivot_lang {
            out.push("all sentences must be in the pivot language".to_string());
        }
        // Translation may collapse a distractor onto the target; that is a
        // legitimate (failing) pivot instance, not a malformed one.
        candidate_violations(&self.target, &self.distractors, false, &mut out);
        out
    }
}

/// Part-of-speech annotation for a single-token swap between target and distractor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffAnnotation {
    pub instance_id: String,
    pub distractor_index: usize,
    pub position: usize,
    pub target_token: String,
    pub distractor_token: String,
    pub pos: String,
}

impl DiffAnnotation {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.distractor_index >= NUM_DISTRACTORS {
            out.push(format!(
                "distractor_index {} out of range 0..=3",
                self.distractor_index
            ));
        }
        if self.pos.is_empty() {
            out.push("pos is empty (untagged candidate?)".to_string());
        } else if !self.pos.bytes().all(|b| b.is_ascii_uppercase()) {
            out.push(format!("pos {:?} is not an uppercase ASCII tag", self.pos));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_records: usize,
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

// Wire records. Field order here is the on-disk key order.

#[derive(Debug, Serialize, Deserialize)]
struct CorpusRecord {
    id: String,
    src_lang: String,
    tgt_lang: String,
    source: String,
    target: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClsdRecord {
    id: String,
    src_lang: String,
    tgt_lang: String,
    source: String,
    target: String,
    distractors: Vec<String>,
    #[serde(default)]
    meta: Meta,
}

#[derive(Debug, Serialize, Deserialize)]
struct PivotRecord {
    id: String,
    src_lang: String,
    tgt_lang: String,
    source: String,
    target: String,
    distractors: Vec<String>,
    #[serde(default)]
    meta: Meta,
    pivot_lang: String,
    original_id: String,
}

impl From<CorpusRecord> for ParallelPair {
    fn from(r: CorpusRecord) -> Self {
        ParallelPair {
            id: r.id,
            source: Sentence::new(r.source, r.src_lang),
            target: Sentence::new(r.target, r.tgt_lang),
        }
    }
}

impl From<&ParallelPair> for CorpusRecord {
    fn from(p: &ParallelPair) -> Self {
        CorpusRecord {
            id: p.id.clone(),
            src_lang: p.source.lang.clone(),
            tgt_lang: p.target.lang.clone(),
            source: p.source.text.clone(),
            target: p.target.text.clone(),
        }
    }
}

impl From<ClsdRecord> for ClsdInstance {
    fn from(r: ClsdRecord) -> Self {
        let distractors = r
            .distractors
            .into_iter()
            .map(|t| Sentence::new(t, r.tgt_lang.clone()))
            .collect();
        ClsdInstance {
            id: r.id,
            source: Sentence::new(r.source, r.src_lang),
            target: Sentence::new(r.target, r.tgt_lang),
            distractors,
            meta: r.meta,
        }
    }
}

impl From<&ClsdInstance> for ClsdRecord {
    fn from(i: &ClsdInstance) -> Self {
        ClsdRecord {
            id: i.id.clone(),
            src_lang: i.source.lang.clone(),
            tgt_lang: i.target.lang.clone(),
            source: i.source.text.clone(),
            target: i.target.text.clone(),
            distractors: i.distractors.iter().map(|d| d.text.clone()).collect(),
            meta: i.meta.clone(),
        }
    }
}

impl From<PivotRecord> for PivotInstance {
    fn from(r: PivotRecord) -> Self {
        let distractors = r
            .distractors
            .into_iter()
            .map(|t| Sentence::new(t, r.tgt_lang.clone()))
            .collect();
        PivotInstance {
            original_id: r.original_id,
            pivot_lang: r.pivot_lang,
            source: Sentence::new(r.source, r.src_lang),
            target: Sentence::new(r.target, r.tgt_lang),
            distractors,
            meta: r.meta,
        }
    }
}

impl From<&PivotInstance> for PivotRecord {
    fn from(p: &PivotInstance) -> Self {
        PivotRecord {
            id: p.original_id.clone(),
            src_lang: p.source.lang.clone(),
            tgt_lang: p.target.lang.clone(),
            source: p.source.text.clone(),
            target: p.target.text.clone(),
            distractors: p.distractors.iter().map(|d| d.text.clone()).collect(),
            meta: p.meta.clone(),
            pivot_lang: p.pivot_lang.clone(),
            original_id: p.original_id.clone(),
        }
    }
}

/// Calls `f` with the 1-based line number and the text of each non-blank line.
fn for_each_line(path: &Path, mut f: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        f(idx + 1, &line)?;
    }
    Ok(())
}

fn parse_line<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message: e.to_string(),
    })
}

fn check_line(path: &Path, line_no: usize, id: &str, violations: Vec<String>) -> Result<()> {
    match violations.into_iter().next() {
        None => Ok(()),
        Some(rule) => Err(Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("record {id}: {rule}"),
        }),
    }
}

fn check_unique_id(
    path: &Path,
    line_no: usize,
    id: &str,
    seen: &mut HashSet<String>,
) -> Result<()> {
    if !seen.insert(id.to_string()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("record {id}: duplicate id"),
        });
    }
    Ok(())
}

fn write_records<W: Write, R: Serialize>(
    mut writer: W,
    records: impl IntoIterator<Item = R>,
) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, &record)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<writer>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<writer>", e))
}

fn save_with(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write(&mut writer)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ParallelPair>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for_each_line(path, |n, line| {
        let pair = ParallelPair::from(parse_line::<CorpusRecord>(path, n, line)?);
        check_line(path, n, &pair.id, pair.violations())?;
        check_unique_id(path, n, &pair.id, &mut seen)?;
        out.push(pair);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_corpus<W: Write>(writer: W, pairs: &[ParallelPair]) -> Result<()> {
    write_records(writer, pairs.iter().map(CorpusRecord::from))
}

pub fn save_corpus(pairs: &[ParallelPair], path: impl AsRef<Path>) -> Result<()> {
    save_with(path.as_ref(), |w| write_corpus(w, pairs))
}

/// Loads a CLSD dataset, failing on the first malformed or invalid line.
pub fn load_clsd_dataset(path: impl AsRef<Path>) -> Result<Vec<ClsdInstance>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for_each_line(path, |n, line| {
        let inst = ClsdInstance::from(parse_line::<ClsdRecord>(path, n, line)?);
        check_line(path, n, &inst.id, inst.violations())?;
        check_unique_id(path, n, &inst.id, &mut seen)?;
        out.push(inst);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_clsd_dataset<W: Write>(writer: W, instances: &[ClsdInstance]) -> Result<()> {
    write_records(writer, instances.iter().map(ClsdRecord::from))
}

pub fn save_clsd_dataset(instances: &[ClsdInstance], path: impl AsRef<Path>) -> Result<()> {
    save_with(path.as_ref(), |w| write_clsd_dataset(w, instances))
}

pub fn load_pivot_dataset(path: impl AsRef<Path>) -> Result<Vec<PivotInstance>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for_each_line(path, |n, line| {
        let inst = PivotInstance::from(parse_line::<PivotRecord>(path, n, line)?);
        check_line(path, n, &inst.original_id, inst.violations())?;
        check_unique_id(path, n, &inst.original_id, &mut seen)?;
        out.push(inst);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_pivot_dataset<W: Write>(writer: W, instances: &[PivotInstance]) -> Result<()> {
    write_records(writer, instances.iter().map(PivotRecord::from))
}

pub fn save_pivot_dataset(instances: &[PivotInstance], path: impl AsRef<Path>) -> Result<()> {
    save_with(path.as_ref(), |w| write_pivot_dataset(w, instances))
}

/// Either kind of evaluable dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dataset {
    Direct(Vec<ClsdInstance>),
    Pivot(Vec<PivotInstance>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Direct(v) => v.len(),
            Dataset::Pivot(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loads a dataset file, detecting pivot files by the `pivot_lang` key of the first record.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut is_pivot = None;
    for_each_line(path, |n, line| {
        if is_pivot.is_none() {
            let value: serde_json::Value = parse_line(path, n, line)?;
            is_pivot = Some(value.get("pivot_lang").is_some());
        }
        Ok(())
    })?;
    if is_pivot == Some(true) {
        load_pivot_dataset(path).map(Dataset::Pivot)
    } else {
        load_clsd_dataset(path).map(Dataset::Direct)
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<DiffAnnotation>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_line(path, |n, line| {
        let ann: DiffAnnotation = parse_line(path, n, line)?;
        check_line(path, n, &ann.instance_id, ann.violations())?;
        out.push(ann);
        Ok(())
    })?;
    Ok(out)
}

/// Writes annotation records without validating them, so untagged candidates
/// (empty `pos`) can be handed to an external tagger.
pub fn write_annotations<W: Write>(writer: W, annotations: &[DiffAnnotation]) -> Result<()> {
    write_records(writer, annotations)
}

pub fn save_annotations(annotations: &[DiffAnnotation], path: impl AsRef<Path>) -> Result<()> {
    save_with(path.as_ref(), |w| write_annotations(w, annotations))
}

/// Lowercases and drops punctuation and whitespace, for near-duplicate checks.
fn loose_form(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Checks every instance and collects all findings instead of stopping at the first.
pub fn validate_dataset(instances: &[ClsdInstance]) -> ValidationReport {
    let mut report = ValidationReport {
        n_records: instances.len(),
        ..Default::default()
    };
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for inst in instances {
        for rule in inst.violations() {
            report.errors.push(Finding {
                id: inst.id.clone(),
                message: rule,
            });
        }
        let count = seen.entry(inst.id.as_str()).or_default();
        *count += 1;
        if *count == 2 {
            report.errors.push(Finding {
                id: inst.id.clone(),
                message: "duplicate id".to_string(),
            });
        }
        warn_instance(inst, &mut report.warnings);
    }
    report
}

fn warn_instance(inst: &ClsdInstance, warnings: &mut Vec<Finding>) {
    let mut texts = HashSet::new();
    let mut duplicate = false;
    for d in &inst.distractors {
        if !texts.insert(d.text.trim()) {
            duplicate = true;
        }
    }
    if duplicate {
        warnings.push(Finding {
            id: inst.id.clone(),
            message: "duplicate distractor".to_string(),
        });
    }
    let target = inst.target.text.trim();
    let target_loose = loose_form(target);
    for (i, d) in inst.distractors.iter().enumerate() {
        if d.text.trim() != target && loose_form(&d.text) == target_loose {
            warnings.push(Finding {
                id: inst.id.clone(),
                message: format!("distractor {i} equals target up to case/punctuation"),
            });
        }
    }
}

/// Validates a dataset file leniently: malformed lines become errors keyed by
/// `line N` rather than aborting. Only I/O failures are returned as `Err`.
pub fn validate_file(path: impl AsRef<Path>) -> Result<ValidationReport> {
    let path = path.as_ref();
    let mut parse_errors = Vec::new();
    let mut instances = Vec::new();
    for_each_line(path, |n, line| {
        match parse_line::<ClsdRecord>(path, n, line) {
            Ok(record) => instances.push((n, ClsdInstance::from(record))),
            Err(e) => parse_errors.push(Finding {
                id: format!("line {n}"),
                message: e.to_string(),
            }),
        }
        Ok(())
    })?;
    let lines: Vec<usize> = instances.iter().map(|(n, _)| *n).collect();
    let instances: Vec<ClsdInstance> = instances.into_iter().map(|(_, i)| i).collect();
    let mut report = validate_dataset(&instances);
    // Prefix record findings with their line so they can be located.
    let line_of: HashMap<&str, usize> = instances
        .iter()
        .zip(&lines)
        .map(|(i, n)| (i.id.as_str(), *n))
        .collect();
    for finding in report.errors.iter_mut().chain(report.warnings.iter_mut()) {
        if let Some(n) = line_of.get(finding.id.as_str()) {
            finding.id = format!("line {n} ({})", finding.id);
        }
    }
    report.n_records += parse_errors.len();
    parse_errors.append(&mut report.errors);
    report.errors = parse_errors;
    Ok(report)
}
