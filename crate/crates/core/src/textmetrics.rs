//! Word-level and character-level text similarity.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

static EDGE_PUNCT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\p{P}+|\p{P}+$").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenScheme {
    /// Case preserved; used for single-token diffs.
    Diff,
    /// Lowercased; used for set-based metrics.
    Set,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<String>,
    scheme: TokenScheme,
}

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn scheme(&self) -> TokenScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_set(&self) -> HashSet<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }
}

/// Splits on Unicode whitespace and strips leading/trailing Unicode
/// punctuation from each token. Tokens left empty are dropped; inner
/// punctuation ("1,5", "Ex-Vorsitzenden") is kept.
pub fn tokenize(text: &str, scheme: TokenScheme) -> TokenSeq {
    let tokens = text
        .split_whitespace()
        .map(|raw| EDGE_PUNCT.replace_all(raw, ""))
        .filter(|t| !t.is_empty())
        .map(|t| match scheme {
            TokenScheme::Diff => t.into_owned(),
            TokenScheme::Set => t.to_lowercase(),
        })
        .collect();
    TokenSeq { tokens, scheme }
}

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`; two empty strings are identical.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// Set Jaccard over the distinct tokens; two empty sequences are identical.
pub fn jaccard_similarity(a: &TokenSeq, b: &TokenSeq) -> f64 {
    let sa = a.to_set();
    let sb = b.to_set();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Word-level Jaccard of two raw texts under the set scheme.
pub fn text_jaccard(a: &str, b: &str) -> f64 {
    jaccard_similarity(
        &tokenize(a, TokenScheme::Set),
        &tokenize(b, TokenScheme::Set),
    )
}

/// For each distractor, the mean Jaccard similarity against the other three.
pub fn intra_distractor_jaccard<S: AsRef<str>>(distractors: &[S; 4]) -> [f64; 4] {
    let seqs: Vec<TokenSeq> = distractors
        .iter()
        .map(|d| tokenize(d.as_ref(), TokenScheme::Set))
        .collect();
    std::array::from_fn(|i| {
        let total: f64 = (0..4)
            .filter(|&j| j != i)
            .map(|j| jaccard_similarity(&seqs[i], &seqs[j]))
            .sum();
        total / 3.0
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRecord {
    pub position: usize,
    pub target_token: String,
    pub distractor_token: String,
}

/// Returns the swapped token when both texts tokenize to equal-length
/// sequences differing at exactly one position (case-sensitive).
pub fn single_token_diff(target: &str, distractor: &str) -> Option<DiffRecord> {
    let t = tokenize(target, TokenScheme::Diff);
    let d = tokenize(distractor, TokenScheme::Diff);
    if t.len() != d.len() {
        return None;
    }
    let mut diffs = t
        .tokens
        .iter()
        .zip(&d.tokens)
        .enumerate()
        .filter(|(_, (a, b))| a != b);
    let (position, (tt, dt)) = diffs.next()?;
    if diffs.next().is_some() {
        return None;
    }
    Some(DiffRecord {
        position,
        target_token: tt.clone(),
        distractor_token: dt.clone(),
    })
}

/// Half-open similarity bins ordered from highest to lowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct BinSpec {
    bins: Vec<(f64, f64)>,
}

const EDGE_EPS: f64 = 1e-12;

impl BinSpec {
    /// Bins must be descending, contiguous, inside `[0, 1]`, with `lo < hi`.
    pub fn new(bins: Vec<(f64, f64)>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidInput("bin spec is empty".into()));
        }
        for &(lo, hi) in &bins {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(Error::InvalidInput(format!(
                    "bin ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"
                )));
            }
        }
        for pair in bins.windows(2) {
            let (upper, lower) = (pair[0], pair[1]);
            if lower.0 >= upper.0 {
                return Err(Error::InvalidInput(format!(
                    "bins must be in descending order: ({}, {}) after ({}, {})",
                    lower.0, lower.1, upper.0, upper.1
                )));
            }
            if lower.1 > upper.0 + EDGE_EPS {
                return Err(Error::InvalidInput(format!(
                    "bins ({}, {}) and ({}, {}) overlap",
                    upper.0, upper.1, lower.0, lower.1
                )));
            }
            if lower.1 < upper.0 - EDGE_EPS {
                return Err(Error::InvalidInput(format!(
                    "gap between bins ({}, {}) and ({}, {})",
                    upper.0, upper.1, lower.0, lower.1
                )));
            }
        }
        Ok(BinSpec { bins })
    }

    /// 0.9–1.0, 0.8–0.9, 0.7–0.8, 0.6–0.7, 0.3–0.6.
    pub fn levenshtein_default() -> Self {
        BinSpec {
            bins: vec![(0.9, 1.0), (0.8, 0.9), (0.7, 0.8), (0.6, 0.7), (0.3, 0.6)],
        }
    }

    pub fn bins(&self) -> &[(f64, f64)] {
        &self.bins
    }

    pub fn lowest(&self) -> f64 {
        self.bins.last().map(|b| b.0).unwrap_or(0.0)
    }

    pub fn highest(&self) -> f64 {
        self.bins[0].1
    }

    /// `lo <= v < hi`, except the top bin also takes `v == hi`.
    pub fn locate(&self, v: f64) -> BinSlot {
        if !v.is_finite() || v < self.lowest() {
            return BinSlot::Underflow;
        }
        let (top_lo, top_hi) = self.bins[0];
        if v > top_hi {
            return BinSlot::Overflow;
        }
        if v >= top_lo {
            return BinSlot::Bin(0);
        }
        for (i, &(lo, hi)) in self.bins.iter().enumerate().skip(1) {
            if lo <= v && v < hi {
                return BinSlot::Bin(i);
            }
        }
        // Contiguity leaves only float noise at an edge here.
        BinSlot::Bin(self.bins.len() - 1)
    }
}

impl TryFrom<Vec<(f64, f64)>> for BinSpec {
    type Error = Error;
    fn try_from(bins: Vec<(f64, f64)>) -> Result<Self> {
        BinSpec::new(bins)
    }
}

impl From<BinSpec> for Vec<(f64, f64)> {
    fn from(spec: BinSpec) -> Self {
        spec.bins
    }
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec::levenshtein_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinSlot {
    Bin(usize),
    Underflow,
    /// Above the top bin; only reachable when the top edge is below 1.
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinTable {
    pub edges: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl BinTable {
    pub fn empty(spec: &BinSpec) -> Self {
        BinTable {
            edges: spec.bins.clone(),
            counts: vec![0; spec.bins.len()],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, slot: BinSlot) {
        match slot {
            BinSlot::Bin(i) => self.counts[i] += 1,
            BinSlot::Underflow => self.underflow += 1,
            BinSlot::Overflow => self.overflow += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }
}

pub fn bin_by_similarity(values: &[f64], spec: &BinSpec) -> BinTable {
    let mut table = BinTable::empty(spec);
    for &v in values {
        table.add(spec.locate(v));
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    const NASDAQ: &str = "Der Nasdaq verzeichnete die schlechteste Woche der letzten vier.";
    const NASDAQ_ADV2: &str = "Der Nasdaq verzeichnete die aktivste Woche der letzten vier.";

    #[test]
    fn tokenize_nasdaq_sentence() {
        let seq = tokenize(NASDAQ, TokenScheme::Set);
        assert_eq!(
            seq.tokens(),
            [
                "der",
                "nasdaq",
                "verzeichnete",
                "die",
                "schlechteste",
                "woche",
                "der",
                "letzten",
                "vier"
            ]
        );
        assert_eq!(seq.to_set().len(), 8);
    }

    #[test]
    fn tokenize_empty_and_punctuation_only() {
        assert!(tokenize("", TokenScheme::Diff).is_empty());
        assert!(tokenize("  … — !", TokenScheme::Diff).is_empty());
        assert_eq!(tokenize("1,5 %", TokenScheme::Diff).tokens(), ["1,5"]);
    }

    #[test]
    fn tokenize_keeps_inner_punctuation_and_case() {
        let seq = tokenize("«Ex-Vorsitzenden» (Reuters) l'Europe:", TokenScheme::Diff);
        assert_eq!(seq.tokens(), ["Ex-Vorsitzenden", "Reuters", "l'Europe"]);
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein_similarity("Europawahl", "Europawahl"), 1.0);
        assert_eq!(levenshtein_similarity("", "ab"), 0.0);
        assert_eq!(levenshtein_similarity("", ""), 1.0);
        assert_eq!(levenshtein_similarity("wahl", "wal"), 0.75);
        // counted in scalar values, not bytes
        assert_eq!(edit_distance("größe", "grosse"), 3);
        assert_eq!(edit_distance("ä", "a"), 1);
    }

    #[test]
    fn jaccard_examples() {
        let a = tokenize("a b c", TokenScheme::Set);
        assert_eq!(
            jaccard_similarity(&a, &tokenize("C B A", TokenScheme::Set)),
            1.0
        );
        assert_eq!(
            jaccard_similarity(&a, &tokenize("x y", TokenScheme::Set)),
            0.0
        );
        assert_eq!(text_jaccard("", ""), 1.0);
        assert!((text_jaccard(NASDAQ, NASDAQ_ADV2) - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn intra_jaccard_identical_sentences() {
        let s = ["Gleich.", "Gleich.", "Gleich.", "Gleich."];
        assert_eq!(intra_distractor_jaccard(&s), [1.0; 4]);
    }

    #[test]
    fn single_token_diff_cases() {
        let t = "Die Linkspartei beschließt in Bonn ihr Programm zur Europawahl.";
        assert_eq!(single_token_diff(t, t), None);
        let rec = single_token_diff(
            t,
            "Die Linkspartei beschließt in Bonn ihr Programm zur Bundestagswahl.",
        )
        .unwrap();
        assert_eq!(rec.position, 8);
        // case-only change is still a swap
        let rec = single_token_diff("Der Rat tagt.", "Der rat tagt.").unwrap();
        assert_eq!(
            (rec.target_token.as_str(), rec.distractor_token.as_str()),
            ("Rat", "rat")
        );
        // two swaps
        assert_eq!(single_token_diff("a b c", "x b z"), None);
    }

    #[test]
    fn bins_follow_top_inclusive_rule() {
        let spec = BinSpec::levenshtein_default();
        assert_eq!(spec.locate(0.85), BinSlot::Bin(1));
        assert_eq!(spec.locate(1.0), BinSlot::Bin(0));
        assert_eq!(spec.locate(0.9), BinSlot::Bin(0));
        assert_eq!(spec.locate(0.6), BinSlot::Bin(3));
        assert_eq!(spec.locate(0.3), BinSlot::Bin(4));
        assert_eq!(spec.locate(0.25), BinSlot::Underflow);
        assert_eq!(spec.locate(f64::NAN), BinSlot::Underflow);
        let table = bin_by_similarity(&[0.85, 1.0, 0.25, 0.31], &spec);
        assert_eq!(table.counts, vec![1, 1, 0, 0, 1]);
        assert_eq!(table.underflow, 1);
        assert_eq!(table.total(), 4);
    }

    #[test]
    fn custom_top_edge_below_one_overflows() {
        let spec = BinSpec::new(vec![(0.5, 0.8), (0.2, 0.5)]).unwrap();
        assert_eq!(spec.locate(0.8), BinSlot::Bin(0));
        assert_eq!(spec.locate(0.9), BinSlot::Overflow);
    }

    #[test]
    fn bad_bin_specs_are_rejected() {
        assert!(BinSpec::new(vec![]).is_err());
        assert!(
            BinSpec::new(vec![(0.3, 0.6), (0.6, 1.0)]).is_err(),
            "ascending"
        );
        assert!(
            BinSpec::new(vec![(0.5, 1.0), (0.4, 0.6)]).is_err(),
            "overlap"
        );
        assert!(BinSpec::new(vec![(0.7, 1.0), (0.3, 0.6)]).is_err(), "gap");
        assert!(BinSpec::new(vec![(0.5, 1.2)]).is_err(), "range");
        assert!(BinSpec::new(vec![(0.5, 0.5)]).is_err(), "empty bin");
    }

    #[test]
    fn bin_spec_json_shape() {
        let spec: BinSpec = serde_json::from_str("[[0.5, 1.0], [0.0, 0.5]]").unwrap();
        assert_eq!(spec.bins().len(), 2);
        assert!(serde_json::from_str::<BinSpec>("[[0.0, 0.5], [0.5, 1.0]]").is_err());
    }
}
