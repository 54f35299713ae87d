//! Parallel annotation corpora: items tagged simultaneously in one or more
//! source systems and a target system, plus the machinery experiments need
//! on top — binary encoding, artist-grouped stratified folds, and nested
//! subsampling.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// One corpus item: its annotations per source system plus its target
/// annotations. Items without target annotations are never admitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedItem {
    pub item_id: String,
    pub artist_id: String,
    /// source system name -> tags from that system.
    pub source_annotations: BTreeMap<String, BTreeSet<String>>,
    pub target_annotations: BTreeSet<String>,
}

impl AnnotatedItem {
    /// Distinct source tags across systems (the union vocabulary view).
    pub fn source_tags(&self) -> BTreeSet<&str> {
        self.source_annotations
            .values()
            .flat_map(|tags| tags.iter().map(String::as_str))
            .collect()
    }
}

/// Parse a source-annotation field `sys:tag;tag|sys2:tag` into a
/// system -> tags map. An empty field yields an empty map.
pub fn parse_source_field(
    field: &str,
    path: &str,
    line_no: usize,
) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut source_annotations: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    if field.trim().is_empty() {
        return Ok(source_annotations);
    }
    for part in field.split('|') {
        let (system, tags) = part.split_once(':').ok_or_else(|| {
            Error::parse(
                path,
                line_no,
                format!("source annotations {part:?} lack a system prefix"),
            )
        })?;
        let system = system.trim();
        if system.is_empty() {
            return Err(Error::parse(path, line_no, "empty source system name"));
        }
        let entry = source_annotations.entry(system.to_string()).or_default();
        let mut any = false;
        for tag in tags.split(';') {
            let tag = tag.trim();
            if tag.is_empty() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("empty tag in source system {system:?}"),
                ));
            }
            entry.insert(tag.to_string());
            any = true;
        }
        if !any {
            return Err(Error::parse(
                path,
                line_no,
                format!("source system {system:?} lists no tags"),
            ));
        }
    }
    Ok(source_annotations)
}

/// A loaded corpus with its vocabularies. The source vocabulary is the
/// union of all source systems' tags, keyed by tag text.
#[derive(Debug, Clone)]
pub struct ParallelCorpus {
    items: Vec<AnnotatedItem>,
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    source_index: BTreeMap<String, usize>,
    target_index: BTreeMap<String, usize>,
    source_systems: Vec<String>,
    /// Items dropped at load time for having no target annotations.
    pub dropped_empty_target: usize,
}

impl ParallelCorpus {
    /// Build from items directly (tests and synthetic data). Items with
    /// empty target sets are dropped and counted.
    pub fn from_items(items: Vec<AnnotatedItem>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut kept = Vec::with_capacity(items.len());
        let mut dropped = 0;
        for item in items {
            if !seen.insert(item.item_id.clone()) {
                return Err(Error::DuplicateItem(item.item_id.clone()));
            }
            if item.target_annotations.is_empty() {
                dropped += 1;
                continue;
            }
            kept.push(item);
        }
        let mut source_vocab = BTreeSet::new();
        let mut target_vocab = BTreeSet::new();
        let mut systems = BTreeSet::new();
        for item in &kept {
            for (system, tags) in &item.source_annotations {
                systems.insert(system.clone());
                source_vocab.extend(tags.iter().cloned());
            }
            target_vocab.extend(item.target_annotations.iter().cloned());
        }
        let source_vocab: Vec<String> = source_vocab.into_iter().collect();
        let target_vocab: Vec<String> = target_vocab.into_iter().collect();
        let source_index = source_vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let target_index = target_vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(ParallelCorpus {
            items: kept,
            source_vocab,
            target_vocab,
            source_index,
            target_index,
            source_systems: systems.into_iter().collect(),
            dropped_empty_target: dropped,
        })
    }

    /// Parse the corpus TSV format:
    /// `item_id TAB artist_id TAB sys:tag;tag|sys2:tag TAB target;tags`.
    /// The source field may be empty (items predicted from bias alone);
    /// an empty target field drops the item.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line_no = ln + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            }
            let item_id = fields[0].trim();
            let artist_id = fields[1].trim();
            if item_id.is_empty() || artist_id.is_empty() {
                return Err(Error::parse(path, line_no, "empty item or artist id"));
            }
            let source_annotations = parse_source_field(fields[2], path, line_no)?;
            let target_annotations: BTreeSet<String> = fields[3]
                .split(';')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            items.push(AnnotatedItem {
                item_id: item_id.to_string(),
                artist_id: artist_id.to_string(),
                source_annotations,
                target_annotations,
            });
        }
        ParallelCorpus::from_items(items)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        ParallelCorpus::parse(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[AnnotatedItem] {
        &self.items
    }

    pub fn item(&self, idx: usize) -> &AnnotatedItem {
        &self.items[idx]
    }

    pub fn source_vocab(&self) -> &[String] {
        &self.source_vocab
    }

    pub fn target_vocab(&self) -> &[String] {
        &self.target_vocab
    }

    pub fn source_systems(&self) -> &[String] {
        &self.source_systems
    }

    pub fn source_index(&self, tag: &str) -> Option<usize> {
        self.source_index.get(tag).copied()
    }

    pub fn target_index(&self, tag: &str) -> Option<usize> {
        self.target_index.get(tag).copied()
    }

    /// Binary design matrices for a subset of item indices: X over the
    /// union source vocabulary, Y over the target vocabulary.
    pub fn encode(&self, subset: &[usize]) -> (Array2<f64>, Array2<f64>) {
        let mut x = Array2::zeros((subset.len(), self.source_vocab.len()));
        let mut y = Array2::zeros((subset.len(), self.target_vocab.len()));
        for (row, &idx) in subset.iter().enumerate() {
            let item = &self.items[idx];
            for tag in item.source_tags() {
                x[[row, self.source_index[tag]]] = 1.0;
            }
            for tag in &item.target_annotations {
                y[[row, self.target_index[tag]]] = 1.0;
            }
        }
        (x, y)
    }

    /// Mean number of distinct source tags per item over a subset.
    pub fn mean_source_tags(&self, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::Config(
                "cannot average source tags over an empty subset".to_string(),
            ));
        }
        let total: usize = subset
            .iter()
            .map(|&i| self.items[i].source_tags().len())
            .sum();
        Ok(total as f64 / subset.len() as f64)
    }
}

/// Assignment of every corpus item to one of k folds, artists atomic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, item_id: &str) -> Option<usize> {
        self.fold_of.get(item_id).copied()
    }

    /// Item indices of one fold, in corpus order.
    pub fn fold_items(&self, corpus: &ParallelCorpus, fold: usize) -> Vec<usize> {
        (0..corpus.len())
            .filter(|&i| self.fold_of[&corpus.item(i).item_id] == fold)
            .collect()
    }

    /// Item indices of all folds but one, in corpus order.
    pub fn train_items(&self, corpus: &ParallelCorpus, held_out: usize) -> Vec<usize> {
        (0..corpus.len())
            .filter(|&i| self.fold_of[&corpus.item(i).item_id] != held_out)
            .collect()
    }

    /// `item_id TAB fold` lines, sorted by item id.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (item, fold) in &self.fold_of {
            out.push_str(item);
            out.push('\t');
            out.push_str(&fold.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut fold_of = BTreeMap::new();
        let mut max_fold = 0;
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (item, fold) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, ln + 1, "expected `item_id TAB fold`"))?;
            let fold: usize = fold
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, ln + 1, format!("bad fold index {fold:?}")))?;
            if fold_of.insert(item.to_string(), fold).is_some() {
                return Err(Error::parse(
                    path,
                    ln + 1,
                    format!("duplicate item {item:?}"),
                ));
            }
            max_fold = max_fold.max(fold);
        }
        Ok(FoldAssignment {
            k: max_fold + 1,
            fold_of,
        })
    }
}

/// Greedy iterative stratification over target labels with artist groups
/// as atomic units.
///
/// Repeatedly pick the label with the fewest remaining (unassigned)
/// occurrences, then assign each unassigned group carrying it to the fold
/// with the greatest remaining demand for that label; ties fall to the
/// fold with fewest assigned items, then to a seeded fold priority.
pub fn stratified_group_kfold(
    corpus: &ParallelCorpus,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    // artist -> item indices
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in corpus.items().iter().enumerate() {
        groups.entry(&item.artist_id).or_default().push(i);
    }
    if k > groups.len() {
        return Err(Error::Config(format!(
            "{k} folds requested but only {} artist groups available",
            groups.len()
        )));
    }
    let artists: Vec<&str> = groups.keys().copied().collect();
    // per-group label counts
    let label_counts: Vec<BTreeMap<&str, usize>> = artists
        .iter()
        .map(|artist| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for &idx in &groups[artist] {
                for tag in &corpus.item(idx).target_annotations {
                    *counts.entry(tag.as_str()).or_insert(0) += 1;
                }
            }
            counts
        })
        .collect();

    // remaining demand per fold and label: total/k each to start
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for counts in &label_counts {
        for (&label, &c) in counts {
            *totals.entry(label).or_insert(0) += c;
        }
    }
    let mut demand: Vec<BTreeMap<&str, f64>> = (0..k)
        .map(|_| {
            totals
                .iter()
                .map(|(&l, &c)| (l, c as f64 / k as f64))
                .collect()
        })
        .collect();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut priority: Vec<usize> = (0..k).collect();
    priority.shuffle(&mut rng);
    let rank_of: Vec<usize> = {
        let mut rank = vec![0; k];
        for (pos, &fold) in priority.iter().enumerate() {
            rank[fold] = pos;
        }
        rank
    };

    let mut assigned_fold: Vec<Option<usize>> = vec![None; artists.len()];
    let mut fold_sizes = vec![0usize; k];
    let mut unassigned = artists.len();
    while unassigned > 0 {
        // remaining occurrences per label over unassigned groups
        let mut remaining: BTreeMap<&str, usize> = BTreeMap::new();
        for (g, counts) in label_counts.iter().enumerate() {
            if assigned_fold[g].is_some() {
                continue;
            }
            for (&label, &c) in counts {
                *remaining.entry(label).or_insert(0) += c;
            }
        }
        let (&rarest, _) = remaining
            .iter()
            .min_by_key(|&(label, &count)| (count, *label))
            .expect("admitted items always carry target labels");
        for g in 0..artists.len() {
            if assigned_fold[g].is_some() || !label_counts[g].contains_key(rarest) {
                continue;
            }
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da = demand[a][rarest];
                    let db = demand[b][rarest];
                    db.partial_cmp(&da)
                        .unwrap()
                        .then(fold_sizes[a].cmp(&fold_sizes[b]))
                        .then(rank_of[a].cmp(&rank_of[b]))
                })
                .unwrap();
            assigned_fold[g] = Some(best);
            fold_sizes[best] += groups[artists[g]].len();
            for (&label, &c) in &label_counts[g] {
                *demand[best].get_mut(label).unwrap() -= c as f64;
            }
            unassigned -= 1;
        }
    }

    let mut fold_of = BTreeMap::new();
    for (g, artist) in artists.iter().enumerate() {
        let fold = assigned_fold[g].unwrap();
        for &idx in &groups[artist] {
            fold_of.insert(corpus.item(idx).item_id.clone(), fold);
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Uniform subsample without replacement of ⌈factor·N⌉ items.
///
/// The pool is shuffled once per seed and a prefix taken, so for a fixed
/// seed the subset at factor f contains the subset at every smaller
/// factor (nested subsampling). The result is sorted.
pub fn subsample(items: &[usize], factor: f64, seed: u64) -> Result<Vec<usize>> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Config(format!(
            "subsampling factor must lie in (0, 1], got {factor}"
        )));
    }
    let take = (factor * items.len() as f64).ceil() as usize;
    let take = take.min(items.len());
    let mut pool = items.to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    pool.truncate(take);
    pool.sort_unstable();
    Ok(pool)
}
