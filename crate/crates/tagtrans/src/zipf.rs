//! Frequency-ranked word list and probabilistic token splitting.
//!
//! Words are ranked by corpus frequency (rank 1 = most frequent) and scored
//! with the Zipf estimate `f(word) = 1 / (rank * ln(N))` where `N` is the
//! total number of ranked unigrams. A dynamic program picks the
//! segmentation whose score product is largest. Segments missing from the
//! table receive a penalty score of `1 / ((N + max_rank) * ln(N))`, further
//! multiplied by `10^-len`, so a cover made of known words always beats one
//! that leans on unknown chunks, while a fully unknown token still comes
//! back unsplit.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WordFrequencyTable {
    rank: HashMap<String, usize>,
    total: usize,
    max_rank: usize,
}

impl Default for WordFrequencyTable {
    fn default() -> Self {
        Self::empty()
    }
}

impl WordFrequencyTable {
    /// A table with no entries: every segment is unknown, so tokens come
    /// back unsplit.
    pub fn empty() -> Self {
        WordFrequencyTable {
            rank: HashMap::new(),
            total: 0,
            max_rank: 0,
        }
    }

    /// Build from words listed in descending frequency order; the rank of a
    /// word is its 1-based position and `N` is the number of lines. A
    /// repeated word keeps its first (best) rank.
    pub fn from_ranked_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut rank = HashMap::new();
        let mut total = 0usize;
        for w in words {
            let w = w.as_ref().trim();
            if w.is_empty() {
                continue;
            }
            total += 1;
            rank.entry(w.to_string()).or_insert(total);
        }
        if total == 1 {
            return Err(Error::Config(
                "a word frequency table needs at least two entries".into(),
            ));
        }
        let max_rank = rank.values().copied().max().unwrap_or(0);
        Ok(WordFrequencyTable {
            rank,
            total,
            max_rank,
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        Self::from_ranked_words(text.lines())
    }

    /// Build from explicit `(word, rank)` pairs and a total unigram count,
    /// for fixtures where ranks are sparse.
    pub fn with_ranks(pairs: &[(&str, usize)], total: usize) -> Result<Self> {
        if total < 2 {
            return Err(Error::Config(
                "a word frequency table needs a total count of at least two".into(),
            ));
        }
        let mut rank = HashMap::new();
        for &(w, r) in pairs {
            if w.is_empty() || r == 0 {
                return Err(Error::Config(format!(
                    "invalid frequency entry ({w:?}, rank {r})"
                )));
            }
            rank.insert(w.to_string(), r);
        }
        let max_rank = rank.values().copied().max().unwrap_or(0);
        Ok(WordFrequencyTable {
            rank,
            total,
            max_rank,
        })
    }

    pub fn len(&self) -> usize {
        self.rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank.is_empty()
    }

    /// Total unigram count `N`.
    pub fn total(&self) -> usize {
        self.total
    }

    fn ln_ln_total(&self) -> f64 {
        // ln(N) with N floored at 2 so the empty table stays usable.
        (self.total.max(2) as f64).ln().ln()
    }

    /// `ln f(word)` for a ranked word, `None` if the word is unknown.
    pub fn log_frequency(&self, word: &str) -> Option<f64> {
        self.rank
            .get(word)
            .map(|&r| -((r as f64).ln() + self.ln_ln_total()))
    }

    /// `ln` of the penalty score assigned to an unknown segment of
    /// `len` characters.
    pub fn penalty_log_frequency(&self, len: usize) -> f64 {
        let base = ((self.total.max(2) + self.max_rank) as f64).ln();
        -(base + self.ln_ln_total()) - (len as f64) * std::f64::consts::LN_10
    }

    /// `ln` score of one segment, known or not.
    pub fn segment_log_score(&self, segment: &str) -> f64 {
        self.log_frequency(segment)
            .unwrap_or_else(|| self.penalty_log_frequency(segment.chars().count()))
    }

    /// Split `token` into the segmentation with the highest score product.
    ///
    /// Always succeeds: a token with no known sub-words comes back whole.
    /// Ties are broken toward fewer words, then toward the leftmost-longest
    /// segmentation.
    pub fn tokenize(&self, token: &str) -> Vec<String> {
        let chars: Vec<char> = token.chars().collect();
        let n = chars.len();
        if n == 0 {
            return Vec::new();
        }

        #[derive(Clone)]
        struct Cand {
            score: f64,
            words: usize,
            // Exclusive end positions of each segment, in order.
            bounds: Vec<usize>,
        }

        // prefer `a` over `b`: higher score, then fewer words, then
        // lexicographically later boundaries (leftmost-longest).
        fn better(a: &Cand, b: &Cand) -> bool {
            if a.score != b.score {
                return a.score > b.score;
            }
            if a.words != b.words {
                return a.words < b.words;
            }
            a.bounds > b.bounds
        }

        let mut best: Vec<Option<Cand>> = vec![None; n + 1];
        best[0] = Some(Cand {
            score: 0.0,
            words: 0,
            bounds: Vec::new(),
        });
        for i in 1..=n {
            for j in 0..i {
                let prev = best[j].clone().expect("every prefix has a segmentation");
                let seg: String = chars[j..i].iter().collect();
                let mut bounds = prev.bounds;
                bounds.push(i);
                let cand = Cand {
                    score: prev.score + self.segment_log_score(&seg),
                    words: prev.words + 1,
                    bounds,
                };
                if best[i].as_ref().is_none_or(|b| better(&cand, b)) {
                    best[i] = Some(cand);
                }
            }
        }

        let bounds = best[n].take().expect("token is non-empty").bounds;
        let mut out = Vec::with_capacity(bounds.len());
        let mut start = 0;
        for end in bounds {
            out.push(chars[start..end].iter().collect());
            start = end;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranked_words_get_decreasing_frequency() {
        let t = WordFrequencyTable::from_ranked_words(["rock", "pop", "metal"]).unwrap();
        let a = t.log_frequency("rock").unwrap();
        let b = t.log_frequency("pop").unwrap();
        let c = t.log_frequency("metal").unwrap();
        assert!(a > b && b > c);
        assert_eq!(t.log_frequency("jazz"), None);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn single_entry_table_is_rejected() {
        assert!(WordFrequencyTable::from_ranked_words(["rock"]).is_err());
    }

    #[test]
    fn known_cover_beats_unknown_chunks() {
        let t = WordFrequencyTable::with_ranks(
            &[("stoner", 500), ("rock", 50), ("sto", 40000)],
            100_000,
        )
        .unwrap();
        assert_eq!(t.tokenize("stonerrock"), vec!["stoner", "rock"]);
    }

    #[test]
    fn unknown_token_comes_back_whole() {
        let t = WordFrequencyTable::with_ranks(&[("rock", 1)], 100).unwrap();
        assert_eq!(t.tokenize("xqzt"), vec!["xqzt"]);
        let empty = WordFrequencyTable::empty();
        assert_eq!(empty.tokenize("xqzt"), vec!["xqzt"]);
    }

    #[test]
    fn tie_breaks_prefer_fewer_then_leftmost_longest() {
        // "abab": "ab" at rank 10 makes ["ab","ab"] and any single-letter
        // mix tie-free; equal-rank words force the leftmost-longest rule.
        let t = WordFrequencyTable::with_ranks(&[("ab", 10), ("abc", 10), ("c", 10)], 100).unwrap();
        // score(abc) = score(ab)+score(c)? No: products differ by one factor;
        // ["abc"] has one factor and wins on score alone.
        assert_eq!(t.tokenize("abc"), vec!["abc"]);
        // Equal score, equal word count: "ab"+"c" vs "a"+"bc" when all four
        // words share one rank; leftmost-longest picks "ab"+"c".
        let t2 =
            WordFrequencyTable::with_ranks(&[("ab", 10), ("c", 10), ("a", 10), ("bc", 10)], 100)
                .unwrap();
        assert_eq!(t2.tokenize("abc"), vec!["ab", "c"]);
    }

    #[test]
    fn brute_force_agreement_on_small_tokens() {
        // Enumerate all 2^(n-1) segmentations and compare the best product
        // with what the dynamic program returns.
        let t = WordFrequencyTable::with_ranks(
            &[("po", 9), ("pop", 3), ("rock", 5), ("op", 40), ("k", 70)],
            5000,
        )
        .unwrap();
        for token in ["poprock", "popop", "krock", "zzz", "popk"] {
            let chars: Vec<char> = token.chars().collect();
            let n = chars.len();
            let mut best = f64::NEG_INFINITY;
            for mask in 0..(1u32 << (n - 1)) {
                let mut score = 0.0;
                let mut start = 0;
                for end in 1..=n {
                    let cut = end == n || mask & (1 << (end - 1)) != 0;
                    if cut {
                        let seg: String = chars[start..end].iter().collect();
                        score += t.segment_log_score(&seg);
                        start = end;
                    }
                }
                if score > best {
                    best = score;
                }
            }
            let got: f64 = t
                .tokenize(token)
                .iter()
                .map(|s| t.segment_log_score(s))
                .sum();
            assert_eq!(got, best, "token {token:?}");
        }
    }
}
