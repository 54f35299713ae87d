//! Tag text normalization.
//!
//! Raw genre tags arrive in wildly different shapes: "Drum'n'Bass", "d+b",
//! "Rock/Pop", "poprock". Normalization lowercases them, rewrites the
//! "and" connectives to one form, splits them into words — first with a
//! trie of known words, then with a frequency-based segmenter when the trie
//! has no answer — and finally produces a canonical key whose word order is
//! sorted, so "Rock/Pop" and "pop rock" compare equal.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ontology::PivotOntology;
use crate::tagsystem::TagSystem;
use crate::trie::Trie;
use crate::zipf::WordFrequencyTable;

/// Pivot words shorter than this many characters go straight into the
/// splitting trie; everything else is inserted only when the words already
/// present cannot cover it.
pub const DIRECT_INSERT_LEN: usize = 7;

/// A raw tag as found in a tag system: any text that is non-empty once
/// surrounding whitespace is trimmed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawTag(String);

impl RawTag {
    pub fn new(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.is_empty() {
            return Err(Error::DegenerateTag { raw: text.into() });
        }
        Ok(RawTag(t.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// The normalized form of a tag: its words in pipeline order plus the
/// canonical key (words sorted and joined), which is what two tags are
/// compared by.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NormalizedForm {
    tokens: Vec<String>,
    canonical_key: String,
}

impl NormalizedForm {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        debug_assert!(!tokens.is_empty());
        let mut sorted: Vec<&str> = tokens.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        NormalizedForm {
            canonical_key: sorted.join(" "),
            tokens,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn canonical_key(&self) -> &str {
        &self.canonical_key
    }

    /// Distinct words of the form.
    pub fn word_set(&self) -> std::collections::BTreeSet<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }
}

/// Lowercase a tag and unify the "and" connectives: `&`, `+`, `'n'`, and a
/// word-initial `n'` all become the word "and". Whitespace is collapsed.
pub fn basic_normalize(raw: &str) -> Result<String> {
    let lower = raw.trim().to_lowercase();
    let s = lower.replace(['&', '+'], " and ");
    let s = s.replace("'n'", " and ");
    let s = rewrite_word_initial_n_apostrophe(&s);
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if s.is_empty() {
        return Err(Error::DegenerateTag { raw: raw.into() });
    }
    Ok(s)
}

/// `n'` counts as a connective only at the start of a word ("rock n' roll");
/// inside a word ("men's") the apostrophe is ordinary punctuation.
fn rewrite_word_initial_n_apostrophe(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let at_word_start = i == 0 || chars[i - 1].is_whitespace();
        if at_word_start && chars[i] == 'n' && i + 1 < chars.len() && chars[i + 1] == '\'' {
            out.push_str(" and ");
            i += 2;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Split normalized text into maximal runs of alphanumeric characters.
pub fn basic_tokenize(text: &str) -> Result<Vec<String>> {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    if tokens.is_empty() {
        return Err(Error::DegenerateTag { raw: text.into() });
    }
    Ok(tokens)
}

/// Which stage produced a candidate split; the probabilistic stage is
/// assessed with two extra conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStage {
    Trie,
    Zipf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RejectReason {
    TooManyShortWords,
    ShortSuffix,
    UnsplitLargeTag,
    SingleLetterMiddleWord,
    NoWordInTrie,
}

#[derive(Debug, Clone)]
pub struct SplitAssessment {
    pub accepted: bool,
    pub reasons: Vec<RejectReason>,
}

/// Thresholds for judging whether a candidate split looks like a real
/// sequence of words. Loadable from a `key=value` text file.
#[derive(Debug, Clone)]
pub struct AssessConfig {
    /// Words of at most this many characters count as "short".
    pub short_word_len: usize,
    /// A final word of at most this many characters is a suspect suffix...
    pub short_suffix_len: usize,
    /// ...provided the input token was longer than this.
    pub short_suffix_min_input: usize,
    /// An unsplit single word of at least this many characters that is not
    /// itself a known word is suspect.
    pub large_tag_len: usize,
}

impl Default for AssessConfig {
    fn default() -> Self {
        AssessConfig {
            short_word_len: 2,
            short_suffix_len: 2,
            short_suffix_min_input: 4,
            large_tag_len: 10,
        }
    }
}

impl AssessConfig {
    pub fn from_key_value_text(text: &str, path: &str) -> Result<Self> {
        let mut cfg = AssessConfig::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, ln + 1, format!("expected key=value, got {line:?}"))
            })?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, ln + 1, format!("not a number: {value:?}")))?;
            match key.trim() {
                "short_word_len" => cfg.short_word_len = value,
                "short_suffix_len" => cfg.short_suffix_len = value,
                "short_suffix_min_input" => cfg.short_suffix_min_input = value,
                "large_tag_len" => cfg.large_tag_len = value,
                other => {
                    return Err(Error::parse(path, ln + 1, format!("unknown key {other:?}")));
                }
            }
        }
        Ok(cfg)
    }
}

/// Judge a candidate split of `original` into `words`.
pub fn assess_split(
    words: &[String],
    original: &str,
    stage: SplitStage,
    trie: &Trie,
    cfg: &AssessConfig,
) -> SplitAssessment {
    let mut reasons = Vec::new();
    let n = words.len();
    let short = words
        .iter()
        .filter(|w| w.chars().count() <= cfg.short_word_len)
        .count();
    if short * 2 > n {
        reasons.push(RejectReason::TooManyShortWords);
    }
    if let Some(last) = words.last() {
        if last.chars().count() <= cfg.short_suffix_len
            && original.chars().count() > cfg.short_suffix_min_input
        {
            reasons.push(RejectReason::ShortSuffix);
        }
    }
    if n == 1 && words[0].chars().count() >= cfg.large_tag_len && !trie.contains(&words[0]) {
        reasons.push(RejectReason::UnsplitLargeTag);
    }
    if stage == SplitStage::Zipf {
        if n >= 3 && words[1..n - 1].iter().any(|w| w.chars().count() == 1) {
            reasons.push(RejectReason::SingleLetterMiddleWord);
        }
        if !words.iter().any(|w| trie.contains(w)) {
            reasons.push(RejectReason::NoWordInTrie);
        }
    }
    SplitAssessment {
        accepted: reasons.is_empty(),
        reasons,
    }
}

/// How a basic token was ultimately split, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitOutcome {
    TrieSplit,
    ZipfSplit,
    Unsplit,
}

/// Build the splitting trie from every tag system plus the pivot ontology.
///
/// All tokens from the basic pipeline are processed shortest-first
/// (ties alphabetical). Pivot words shorter than `direct_insert_len` are
/// inserted unconditionally; every other token is first split against the
/// words already present and inserted only when no cover exists.
pub fn build_trie(systems: &[&TagSystem], pivot: &PivotOntology, direct_insert_len: usize) -> Trie {
    // token -> appears among pivot tokens
    let mut tokens: BTreeMap<String, bool> = BTreeMap::new();
    let collect = |text: &str, is_pivot: bool, map: &mut BTreeMap<String, bool>| {
        if let Ok(base) = basic_normalize(text) {
            if let Ok(toks) = basic_tokenize(&base) {
                for t in toks {
                    let e = map.entry(t).or_insert(false);
                    *e = *e || is_pivot;
                }
            }
        }
    };
    for label in pivot.labels() {
        collect(label, true, &mut tokens);
    }
    for sys in systems {
        for tag in sys.tags() {
            collect(tag.as_str(), false, &mut tokens);
        }
    }

    let mut ordered: Vec<(String, bool)> = tokens.into_iter().collect();
    ordered.sort_by(|a, b| (a.0.chars().count(), &a.0).cmp(&(b.0.chars().count(), &b.0)));

    let mut trie = Trie::new();
    for (tok, is_pivot) in ordered {
        // short pivot words always go in; anything else only if the words
        // already present cannot cover it
        if (is_pivot && tok.chars().count() < direct_insert_len) || trie.tokenize(&tok).is_none() {
            trie.insert(&tok);
        }
    }
    trie
}

/// The full normalization pipeline: basic text cleanup, then per-token trie
/// splitting with the probabilistic segmenter as fallback, each candidate
/// split checked by [`assess_split`].
#[derive(Debug, Clone)]
pub struct Normalizer {
    trie: Trie,
    freq: WordFrequencyTable,
    assess: AssessConfig,
}

impl Normalizer {
    pub fn new(trie: Trie, freq: WordFrequencyTable, assess: AssessConfig) -> Self {
        Normalizer { trie, freq, assess }
    }

    /// A normalizer with no known words: only the basic pipeline applies.
    pub fn basic() -> Self {
        Normalizer {
            trie: Trie::new(),
            freq: WordFrequencyTable::empty(),
            assess: AssessConfig::default(),
        }
    }

    pub fn trie(&self) -> &Trie {
        &self.trie
    }

    pub fn frequency_table(&self) -> &WordFrequencyTable {
        &self.freq
    }

    pub fn normalize_tag(&self, raw: &str) -> Result<NormalizedForm> {
        self.normalize_tag_traced(raw).map(|(form, _)| form)
    }

    /// Like [`Normalizer::normalize_tag`] but also reports how each basic
    /// token was split.
    pub fn normalize_tag_traced(&self, raw: &str) -> Result<(NormalizedForm, Vec<SplitOutcome>)> {
        let text = basic_normalize(raw)?;
        let base = basic_tokenize(&text).map_err(|_| Error::DegenerateTag { raw: raw.into() })?;
        let mut tokens = Vec::new();
        let mut outcomes = Vec::with_capacity(base.len());
        for tok in base {
            let (words, outcome) = self.split_token(&tok);
            tokens.extend(words);
            outcomes.push(outcome);
        }
        Ok((NormalizedForm::from_tokens(tokens), outcomes))
    }

    fn split_token(&self, token: &str) -> (Vec<String>, SplitOutcome) {
        if let Some(words) = self.trie.tokenize(token) {
            if assess_split(&words, token, SplitStage::Trie, &self.trie, &self.assess).accepted {
                return (words, SplitOutcome::TrieSplit);
            }
        }
        let words = self.freq.tokenize(token);
        if !words.is_empty()
            && assess_split(&words, token, SplitStage::Zipf, &self.trie, &self.assess).accepted
        {
            return (words, SplitOutcome::ZipfSplit);
        }
        (vec![token.to_string()], SplitOutcome::Unsplit)
    }
}
