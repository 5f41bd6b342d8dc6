//! Normalized similarity shifts for single-token swaps, their mono/cross
//! correlation, and the Levenshtein distribution of successful distractors.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{ClsdInstance, DiffAnnotation, ParallelPair, NUM_DISTRACTORS};
use crate::embedding::{embed_distinct, Embedder};
use crate::evaluator::{cosine, Candidates, EvalReport};
use crate::textmetrics::{levenshtein_similarity, single_token_diff, BinSlot, BinSpec};
use crate::{Error, Result};

/// Values at or below this are treated as an embedder that cannot tell
/// parallel from unrelated pairs.
pub const DEGENERATE_NORM: f64 = 1e-6;

pub const ANY_GROUP: &str = "ANY";

/// Mean parallel-pair cosine minus mean unrelated-pair cosine for one model
/// and language direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationFactor {
    pub value: f64,
    pub model_id: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub n_parallel: usize,
    pub n_unrelated: usize,
    pub seed: u64,
}

impl NormalizationFactor {
    pub fn check(&self) -> Result<()> {
        if !self.value.is_finite() || self.value <= DEGENERATE_NORM {
            return Err(Error::InvalidInput(format!(
                "degenerate normalization: {}",
                self.value
            )));
        }
        Ok(())
    }
}

/// Seeded permutation without fixed points.
///
/// A ChaCha8 shuffle of `0..n`, then one forward pass that swaps every
/// remaining fixed point with its successor (wrapping at the end). Each swap
/// leaves both touched slots fixed-point free, so one pass suffices.
pub fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    if n < 2 {
        return perm;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    for i in 0..n {
        if perm[i] == i {
            perm.swap(i, (i + 1) % n);
        }
    }
    perm
}

pub fn normalization_factor(
    embedder: &dyn Embedder,
    pairs: &[ParallelPair],
    seed: u64,
) -> Result<NormalizationFactor> {
    if pairs.len() < 2 {
        return Err(Error::InvalidInput(
            "normalization needs at least 2 parallel pairs".into(),
        ));
    }
    let texts = pairs
        .iter()
        .flat_map(|p| [p.source.text.as_str(), p.target.text.as_str()]);
    let table = embed_distinct(embedder, texts)?;
    let emb = |t: &str| &table[t];

    let parallel: Vec<f64> = pairs
        .iter()
        .map(|p| cosine(emb(&p.source.text), emb(&p.target.text)))
        .collect::<Result<_>>()?;
    let partner = derangement(pairs.len(), seed);
    let unrelated: Vec<f64> = pairs
        .iter()
        .zip(&partner)
        .map(|(p, &j)| cosine(emb(&p.source.text), emb(&pairs[j].target.text)))
        .collect::<Result<_>>()?;

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let value = mean(&parallel) - mean(&unrelated);
    let factor = NormalizationFactor {
        value,
        model_id: embedder.model_id().to_string(),
        src_lang: pairs[0].source.lang.clone(),
        tgt_lang: pairs[0].target.lang.clone(),
        n_parallel: parallel.len(),
        n_unrelated: unrelated.len(),
        seed,
    };
    if value <= DEGENERATE_NORM {
        return Err(Error::InvalidInput(format!(
            "degenerate normalization: {value} (embedder does not separate parallel from unrelated pairs)"
        )));
    }
    Ok(factor)
}

/// `(cos(S,d) - cos(S,T)) / norm`: negative when the distractor is less
/// similar to the source than the true target is.
pub fn cross_shift_from_cosines(cos_st: f64, cos_sd: f64, norm: f64) -> f64 {
    (cos_sd - cos_st) / norm
}

/// `(cos(T,d) - 1) / norm`, the cross shift with the source replaced by the target.
pub fn mono_shift_from_cosine(cos_td: f64, norm: f64) -> f64 {
    (cos_td - 1.0) / norm
}

pub fn cross_shift(
    embedder: &dyn Embedder,
    source: &str,
    target: &str,
    distractor: &str,
    norm: &NormalizationFactor,
) -> Result<f64> {
    norm.check()?;
    let table = embed_distinct(embedder, [source, target, distractor])?;
    let s = &table[source];
    Ok(cross_shift_from_cosines(
        cosine(s, &table[target])?,
        cosine(s, &table[distractor])?,
        norm.value,
    ))
}

pub fn mono_shift(
    embedder: &dyn Embedder,
    target: &str,
    distractor: &str,
    norm: &NormalizationFactor,
) -> Result<f64> {
    norm.check()?;
    let table = embed_distinct(embedder, [target, distractor])?;
    Ok(mono_shift_from_cosine(
        cosine(&table[target], &table[distractor])?,
        norm.value,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub instance_id: String,
    pub distractor_index: usize,
    pub pos: String,
    pub cross_shift: f64,
    pub mono_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftGroup {
    pub group: String,
    pub n: usize,
    pub mean_cross_shift: f64,
    pub mean_mono_shift: f64,
    /// `None` when the group is too small or flat for a correlation.
    pub corr_mono_cross: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftTable {
    pub records: Vec<ShiftRecord>,
    /// `ANY` first, then POS groups in lexical order.
    pub groups: Vec<ShiftGroup>,
}

impl ShiftTable {
    pub fn from_records(records: Vec<ShiftRecord>) -> Self {
        let mut by_pos: BTreeMap<&str, Vec<&ShiftRecord>> = BTreeMap::new();
        for r in &records {
            by_pos.entry(r.pos.as_str()).or_default().push(r);
        }
        let mut groups = vec![summarize(ANY_GROUP, records.iter())];
        groups.extend(
            by_pos
                .into_iter()
                .map(|(pos, rs)| summarize(pos, rs.into_iter())),
        );
        ShiftTable { records, groups }
    }

    pub fn group(&self, name: &str) -> Option<&ShiftGroup> {
        self.groups.iter().find(|g| g.group == name)
    }

    fn members<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a ShiftRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| group == ANY_GROUP || r.pos == group)
    }
}

fn summarize<'a>(name: &str, records: impl Iterator<Item = &'a ShiftRecord>) -> ShiftGroup {
    let (mono, cross): (Vec<f64>, Vec<f64>) =
        records.map(|r| (r.mono_shift, r.cross_shift)).unzip();
    let n = cross.len();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    ShiftGroup {
        group: name.to_string(),
        n,
        mean_cross_shift: mean(&cross),
        mean_mono_shift: mean(&mono),
        corr_mono_cross: pearson(&mono, &cross).ok(),
    }
}

/// Pearson correlation; needs at least two points and spread in both coordinates.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(
            "correlation inputs differ in length".into(),
        ));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "correlation needs at least 2 records, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidInput(
            "correlation undefined: zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of (mono, cross) shifts for one POS group or `ANY`.
pub fn mono_cross_correlation(table: &ShiftTable, group: &str) -> Result<f64> {
    let (mono, cross): (Vec<f64>, Vec<f64>) = table
        .members(group)
        .map(|r| (r.mono_shift, r.cross_shift))
        .unzip();
    pearson(&mono, &cross)
}

/// Computes one [`ShiftRecord`] per annotation.
///
/// Every annotation must point at a (target, distractor) pair that
/// [`single_token_diff`] also sees as a one-token swap at the same position
/// with the same tokens; anything else is an error naming the pair.
/// Monolingual shifts are divided by `mono_norm` when given, otherwise by `norm`.
pub fn shift_analysis(
    embedder: &dyn Embedder,
    dataset: &[ClsdInstance],
    annotations: &[DiffAnnotation],
    norm: &NormalizationFactor,
    mono_norm: Option<&NormalizationFactor>,
) -> Result<ShiftTable> {
    norm.check()?;
    let mono_value = match mono_norm {
        Some(m) => {
            m.check()?;
            m.value
        }
        None => norm.value,
    };
    let by_id: HashMap<&str, &ClsdInstance> = dataset.iter().map(|i| (i.id.as_str(), i)).collect();

    let mut resolved = Vec::with_capacity(annotations.len());
    for ann in annotations {
        let pair_name = format!("{}#{}", ann.instance_id, ann.distractor_index);
        if ann.pos == ANY_GROUP {
            return Err(Error::InvalidInput(format!(
                "annotation {pair_name}: pos {ANY_GROUP} is reserved"
            )));
        }
        let inst = by_id.get(ann.instance_id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("annotation {pair_name}: unknown instance"))
        })?;
        let distractor = inst.distractors.get(ann.distractor_index).ok_or_else(|| {
            Error::InvalidInput(format!("annotation {pair_name}: no such distractor"))
        })?;
        let diff = single_token_diff(&inst.target.text, &distractor.text).ok_or_else(|| {
            Error::InvalidInput(format!(
                "annotation {pair_name}: target and distractor are not a single-token swap"
            ))
        })?;
        if diff.position != ann.position
            || diff.target_token != ann.target_token
            || diff.distractor_token != ann.distractor_token
        {
            return Err(Error::InvalidInput(format!(
                "annotation {pair_name}: annotated swap {}:{}->{} disagrees with tokenizer {}:{}->{}",
                ann.position,
                ann.target_token,
                ann.distractor_token,
                diff.position,
                diff.target_token,
                diff.distractor_token
            )));
        }
        resolved.push((ann, *inst, distractor.text.as_str()));
    }

    let texts = resolved
        .iter()
        .flat_map(|(_, inst, d)| [inst.source.text.as_str(), inst.target.text.as_str(), *d]);
    let table = embed_distinct(embedder, texts)?;
    let mut records = Vec::with_capacity(resolved.len());
    for (ann, inst, d) in resolved {
        let (s, t, d) = (
            &table[&inst.source.text],
            &table[&inst.target.text],
            &table[d],
        );
        records.push(ShiftRecord {
            instance_id: ann.instance_id.clone(),
            distractor_index: ann.distractor_index,
            pos: ann.pos.clone(),
            cross_shift: cross_shift_from_cosines(cosine(s, t)?, cosine(s, d)?, norm.value),
            mono_shift: mono_shift_from_cosine(cosine(t, d)?, mono_value),
        });
    }
    Ok(ShiftTable::from_records(records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessBin {
    pub lo: f64,
    pub hi: f64,
    /// All distractors whose Levenshtein similarity falls in this bin.
    pub d_bin_total: usize,
    pub success_count: usize,
    pub success_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessDistributionTable {
    pub dataset_id: String,
    pub backend_id: String,
    pub model_id: String,
    pub bins: Vec<SuccessBin>,
    /// Below the lowest bin edge.
    pub underflow: SuccessBin,
    /// Above the highest bin edge; always empty for specs topping out at 1.
    pub overflow: SuccessBin,
    pub total_distractors: usize,
    pub total_success: usize,
    /// Set when no distractor succeeded; all percentages are then 0.
    pub empty: bool,
}

impl SuccessDistributionTable {
    pub fn rows(&self) -> impl Iterator<Item = &SuccessBin> {
        self.bins
            .iter()
            .chain(std::iter::once(&self.underflow))
            .chain(std::iter::once(&self.overflow))
    }
}

/// Bins the successful distractors of a report by their Levenshtein
/// similarity to the true target.
///
/// A distractor succeeds when its instance failed and its similarity to the
/// source is at least the target's. On exact similarities this is the plain
/// `sim(S,d) >= sim(S,T)` rule; tying it to the instance flag keeps the two
/// consistent when sims were rounded on disk.
pub fn success_distribution<C: Candidates>(
    report: &EvalReport,
    dataset: &[C],
    spec: &BinSpec,
) -> Result<SuccessDistributionTable> {
    let by_id: HashMap<&str, &C> = dataset.iter().map(|c| (c.result_id(), c)).collect();
    let empty_bin = |lo: f64, hi: f64| SuccessBin {
        lo,
        hi,
        d_bin_total: 0,
        success_count: 0,
        success_pct: 0.0,
    };
    let mut bins: Vec<SuccessBin> = spec
        .bins()
        .iter()
        .map(|&(lo, hi)| empty_bin(lo, hi))
        .collect();
    let mut underflow = empty_bin(0.0, spec.lowest());
    let mut overflow = empty_bin(spec.highest(), 1.0);
    let mut total_distractors = 0;
    let mut total_success = 0;

    for result in &report.results {
        let item = by_id.get(result.id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("report id {} not found in dataset", result.id))
        })?;
        if item.distractors().len() != NUM_DISTRACTORS {
            return Err(Error::Invariant {
                id: result.id.clone(),
                rule: crate::datamodel::RULE_DISTRACTOR_COUNT.into(),
            });
        }
        for (d, &sim) in item.distractors().iter().zip(&result.sim_distractors) {
            let lev = levenshtein_similarity(&d.text, &item.target().text);
            let slot = match spec.locate(lev) {
                BinSlot::Bin(i) => &mut bins[i],
                BinSlot::Underflow => &mut underflow,
                BinSlot::Overflow => &mut overflow,
            };
            slot.d_bin_total += 1;
            total_distractors += 1;
            if !result.success && sim >= result.sim_target {
                slot.success_count += 1;
                total_success += 1;
            }
        }
    }

    for slot in bins.iter_mut().chain([&mut underflow, &mut overflow]) {
        if total_success > 0 {
            slot.success_pct = 100.0 * slot.success_count as f64 / total_success as f64;
        }
    }
    Ok(SuccessDistributionTable {
        dataset_id: report.dataset_id.clone(),
        backend_id: report.backend_id.clone(),
        model_id: report.model_id.clone(),
        bins,
        underflow,
        overflow,
        total_distractors,
        total_success,
        empty: total_success == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Meta, Sentence};
    use crate::embedding::EmbeddingVector;
    use crate::evaluator::{EvalMode, InstanceResult};

    fn factor(value: f64) -> NormalizationFactor {
        NormalizationFactor {
            value,
            model_id: "m".into(),
            src_lang: "fr".into(),
            tgt_lang: "de".into(),
            n_parallel: 2,
            n_unrelated: 2,
            seed: 0,
        }
    }

    /// Maps each text to a fixed vector; unknown texts fail.
    struct Table(HashMap<String, Vec<f64>>);

    impl Embedder for Table {
        fn backend_id(&self) -> &str {
            "table"
        }
        fn model_id(&self) -> &str {
            "table"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
            texts
                .iter()
                .map(|t| {
                    let v = self
                        .0
                        .get(t)
                        .ok_or_else(|| Error::Provider(format!("no vector for {t}")))?;
                    EmbeddingVector::new(v.clone(), "table", "table")
                })
                .collect()
        }
    }

    fn pair(id: &str, s: &str, t: &str) -> ParallelPair {
        ParallelPair {
            id: id.into(),
            source: Sentence::new(s, "fr"),
            target: Sentence::new(t, "de"),
        }
    }

    #[test]
    fn derangement_has_no_fixed_points() {
        for n in 2..40 {
            for seed in 0..20 {
                let p = derangement(n, seed);
                let mut sorted = p.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..n).collect::<Vec<_>>());
                assert!(
                    p.iter().enumerate().all(|(i, &j)| i != j),
                    "n={n} seed={seed}"
                );
            }
        }
        assert_eq!(derangement(30, 17), derangement(30, 17));
    }

    #[test]
    fn orthogonal_unrelated_pairs_give_factor_one() {
        // pair i: source and target share basis vector e_i
        let mut m = HashMap::new();
        for i in 0..3 {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            m.insert(format!("s{i}"), v.clone());
            m.insert(format!("t{i}"), v);
        }
        let pairs: Vec<ParallelPair> = (0..3)
            .map(|i| pair(&i.to_string(), &format!("s{i}"), &format!("t{i}")))
            .collect();
        let f = normalization_factor(&Table(m), &pairs, 5).unwrap();
        assert!((f.value - 1.0).abs() < 1e-12);
        assert_eq!((f.n_parallel, f.n_unrelated, f.seed), (3, 3, 5));
        assert_eq!((f.src_lang.as_str(), f.tgt_lang.as_str()), ("fr", "de"));
    }

    #[test]
    fn constant_embedder_is_degenerate() {
        let m: HashMap<String, Vec<f64>> = ["s0", "t0", "s1", "t1"]
            .iter()
            .map(|t| (t.to_string(), vec![1.0, 1.0]))
            .collect();
        let pairs = vec![pair("a", "s0", "t0"), pair("b", "s1", "t1")];
        let err = normalization_factor(&Table(m), &pairs, 0).unwrap_err();
        assert!(err.to_string().contains("degenerate normalization"));
    }

    #[test]
    fn normalization_needs_two_pairs() {
        let m = HashMap::from([("s".to_string(), vec![1.0]), ("t".to_string(), vec![1.0])]);
        assert!(normalization_factor(&Table(m), &[pair("a", "s", "t")], 0).is_err());
    }

    #[test]
    fn shift_formulas() {
        assert_eq!(cross_shift_from_cosines(0.7, 0.7, 0.4), 0.0);
        assert!((cross_shift_from_cosines(0.9, 0.7, 0.4) - -0.5).abs() < 1e-12);
        assert!((mono_shift_from_cosine(0.8, 0.4) - -0.5).abs() < 1e-12);
        assert_eq!(mono_shift_from_cosine(1.0, 0.4), 0.0);
    }

    #[test]
    fn mono_shift_of_identical_texts_is_zero() {
        let m = HashMap::from([("t".to_string(), vec![0.3, 0.4])]);
        assert_eq!(mono_shift(&Table(m), "t", "t", &factor(0.5)).unwrap(), 0.0);
    }

    #[test]
    fn shifts_reject_degenerate_factor() {
        let m = HashMap::from([("t".to_string(), vec![0.3, 0.4])]);
        assert!(mono_shift(&Table(m), "t", "t", &factor(0.0)).is_err());
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        // hand oracle: deviations x = (-1,0,1), y = (0,-1,1); cov = 1, var = 2, 2
        assert!((pearson(&xs, &[2.0, 1.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    fn record(pos: &str, cross: f64, mono: f64) -> ShiftRecord {
        ShiftRecord {
            instance_id: "i".into(),
            distractor_index: 0,
            pos: pos.into(),
            cross_shift: cross,
            mono_shift: mono,
        }
    }

    #[test]
    fn noun_group_means() {
        let table =
            ShiftTable::from_records(vec![record("NOUN", -0.4, -0.1), record("NOUN", -0.6, -0.3)]);
        let noun = table.group("NOUN").unwrap();
        let any = table.group(ANY_GROUP).unwrap();
        assert_eq!((noun.n, any.n), (2, 2));
        assert!((noun.mean_cross_shift + 0.5).abs() < 1e-12);
        assert!((any.mean_cross_shift + 0.5).abs() < 1e-12);
        assert_eq!(table.groups[0].group, ANY_GROUP);
    }

    #[test]
    fn correlation_by_group() {
        let table = ShiftTable::from_records(vec![
            record("NOUN", -0.1, -0.1),
            record("NOUN", -0.2, -0.2),
            record("VERB", -0.3, 0.3),
            record("VERB", -0.5, 0.5),
            record("ADJ", -0.2, -0.4),
        ]);
        assert!((mono_cross_correlation(&table, "NOUN").unwrap() - 1.0).abs() < 1e-12);
        assert!((mono_cross_correlation(&table, "VERB").unwrap() + 1.0).abs() < 1e-12);
        assert!(mono_cross_correlation(&table, "ADJ").is_err());
        assert!(mono_cross_correlation(&table, ANY_GROUP).is_ok());
        assert_eq!(table.group("ADJ").unwrap().corr_mono_cross, None);
    }

    fn instance(id: &str, target: &str, ds: [&str; 4]) -> ClsdInstance {
        ClsdInstance {
            id: id.into(),
            source: Sentence::new(format!("source {id}"), "fr"),
            target: Sentence::new(target, "de"),
            distractors: ds.iter().map(|d| Sentence::new(*d, "de")).collect(),
            meta: Meta::new(),
        }
    }

    #[test]
    fn annotation_on_two_token_change_is_rejected() {
        let inst = instance("x", "a b c", ["x y c", "a b d", "a q c", "z b c"]);
        let ann = DiffAnnotation {
            instance_id: "x".into(),
            distractor_index: 0,
            position: 0,
            target_token: "a".into(),
            distractor_token: "x".into(),
            pos: "NOUN".into(),
        };
        let m: HashMap<String, Vec<f64>> = HashMap::new();
        let err = shift_analysis(&Table(m), &[inst], &[ann], &factor(0.5), None).unwrap_err();
        assert!(err.to_string().contains("x#0"), "{err}");
    }

    #[test]
    fn annotation_disagreeing_with_tokenizer_is_rejected() {
        let inst = instance("x", "a b c", ["x y c", "a b d", "a q c", "z b c"]);
        let ann = DiffAnnotation {
            instance_id: "x".into(),
            distractor_index: 1,
            position: 1,
            target_token: "c".into(),
            distractor_token: "d".into(),
            pos: "NOUN".into(),
        };
        let m: HashMap<String, Vec<f64>> = HashMap::new();
        let err = shift_analysis(&Table(m), &[inst], &[ann], &factor(0.5), None).unwrap_err();
        assert!(
            err.to_string().contains("disagrees with tokenizer"),
            "{err}"
        );
    }

    fn report(results: Vec<InstanceResult>) -> EvalReport {
        let n = results.len();
        let ok = results.iter().filter(|r| r.success).count();
        EvalReport {
            dataset_id: "d".into(),
            backend_id: "b".into(),
            model_id: "m".into(),
            mode: EvalMode::Direct,
            n,
            p_at_1: ok as f64 / n as f64,
            results,
        }
    }

    #[test]
    fn success_distribution_quarter_half_quarter() {
        // Levenshtein similarity to the 20-char target:
        // 1 edit -> 0.95, 3 edits -> 0.85, 3 edits -> 0.85, 7 edits -> 0.65
        let target = "abcdefghijklmnopqrst";
        let inst = instance(
            "x",
            target,
            [
                "Xbcdefghijklmnopqrst",
                "XXXdefghijklmnopqrst",
                "abcdefghijklmnopqXXX",
                "XXXXXXXhijklmnopqrst",
            ],
        );
        let lev: Vec<f64> = inst
            .distractors
            .iter()
            .map(|d| levenshtein_similarity(&d.text, target))
            .collect();
        assert!((lev[0] - 0.95).abs() < 1e-12 && (lev[3] - 0.65).abs() < 1e-12);
        let rep = report(vec![InstanceResult::from_sims(
            "x",
            0.5,
            [0.9, 0.8, 0.7, 0.6],
        )]);
        let table = success_distribution(&rep, &[inst], &BinSpec::default()).unwrap();
        let pct: Vec<f64> = table.bins.iter().map(|b| b.success_pct).collect();
        assert_eq!(pct, vec![25.0, 50.0, 0.0, 25.0, 0.0]);
        assert_eq!(table.underflow.success_pct, 0.0);
        assert!(!table.empty);
    }

    #[test]
    fn no_failures_gives_flagged_empty_table() {
        let inst = instance("x", "abc", ["abd", "abe", "abf", "abg"]);
        let rep = report(vec![InstanceResult::from_sims("x", 0.9, [0.1; 4])]);
        let table = success_distribution(&rep, &[inst], &BinSpec::default()).unwrap();
        assert!(table.empty);
        assert_eq!(table.total_success, 0);
        assert_eq!(table.total_distractors, 4);
        assert!(table.rows().all(|r| r.success_pct == 0.0));
    }

    #[test]
    fn unknown_report_id_is_an_error() {
        let inst = instance("x", "abc", ["abd", "abe", "abf", "abg"]);
        let rep = report(vec![InstanceResult::from_sims("y", 0.9, [0.1; 4])]);
        assert!(success_distribution(&rep, &[inst], &BinSpec::default()).is_err());
    }
}
