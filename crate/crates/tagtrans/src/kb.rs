//! Knowledge-based translation: map every tag of a system onto the pivot
//! ontology, then relate source and target tags by cosine similarity of
//! their pivot score rows.
//!
//! Mapping runs a fixed cascade per tag:
//!
//! 1. exact canonical-key match against pivot labels;
//! 2. canonical-key match of the tag compounded with each of its parents;
//! 3. for single-word tags, the pivot genres containing the word, keeping
//!    the ones with maximal subgenre in-degree among them;
//! 4. for multi-word tags, the pivot genres sharing the most words,
//!    refined by shared concept-genre count when that refinement is
//!    non-empty;
//! 5. one hop of score propagation: each scored genre passes half its base
//!    score to every pivot neighbor, additively.
//!
//! Tags missed by every step receive the arithmetic mean of their related
//! tags' rows in a final fallback pass; tags still at zero are flagged
//! unmappable.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{GenreGraph, NodeKind};
use crate::normalize::{NormalizedForm, Normalizer};
use crate::ontology::PivotOntology;
use crate::tagsystem::TagSystem;
use crate::util::fmt_sig9;

/// Sparse pivot score row: (label index, score) sorted by label index,
/// scores strictly positive.
pub type SparseRow = Vec<(u32, f64)>;

fn to_sparse(row: &BTreeMap<u32, f64>) -> SparseRow {
    row.iter()
        .filter(|&(_, &v)| v > 0.0)
        .map(|(&i, &v)| (i, v))
        .collect()
}

/// Per-system mapping of tags onto pivot genres.
#[derive(Debug, Clone)]
pub struct MappingMatrix {
    pub system: String,
    /// Raw tag text, sorted.
    pub tags: Vec<String>,
    /// One sparse row per tag, aligned with `tags`.
    pub rows: Vec<SparseRow>,
    /// Number of pivot labels (row dimension).
    pub n_cols: usize,
    /// Tags whose row stayed all-zero even after the fallback pass.
    pub unmapped: BTreeSet<String>,
}

impl MappingMatrix {
    pub fn row(&self, tag: &str) -> Option<&SparseRow> {
        self.tags
            .binary_search_by(|t| t.as_str().cmp(tag))
            .ok()
            .map(|i| &self.rows[i])
    }

    /// Dense view of one row (mainly for tests and hand checks).
    pub fn dense_row(&self, tag: &str) -> Option<Vec<f64>> {
        self.row(tag).map(|row| {
            let mut out = vec![0.0; self.n_cols];
            for &(i, v) in row {
                out[i as usize] = v;
            }
            out
        })
    }

    /// Build directly from dense rows (tests and synthetic data).
    pub fn from_dense(system: &str, tags: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        if tags.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} tags but {} rows",
                tags.len(),
                rows.len()
            )));
        }
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut order: Vec<usize> = (0..tags.len()).collect();
        order.sort_by(|&a, &b| tags[a].cmp(tags[b]));
        let mut out_tags = Vec::new();
        let mut out_rows = Vec::new();
        let mut unmapped = BTreeSet::new();
        for idx in order {
            if rows[idx].len() != n_cols {
                return Err(Error::Dimension("ragged rows".to_string()));
            }
            let sparse: SparseRow = rows[idx]
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v > 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect();
            if sparse.is_empty() {
                unmapped.insert(tags[idx].to_string());
            }
            out_tags.push(tags[idx].to_string());
            out_rows.push(sparse);
        }
        Ok(MappingMatrix {
            system: system.to_string(),
            tags: out_tags,
            rows: out_rows,
            n_cols,
            unmapped,
        })
    }

    /// Merge matrices from several systems into one, keyed by tag text.
    /// A tag present in multiple systems gets the element-wise mean of its
    /// rows, so no single system dominates shared vocabulary.
    pub fn merge(parts: &[&MappingMatrix], name: &str) -> Result<Self> {
        let n_cols = parts.first().map_or(0, |m| m.n_cols);
        if parts.iter().any(|m| m.n_cols != n_cols) {
            return Err(Error::Dimension(
                "mapping matrices disagree on pivot size".to_string(),
            ));
        }
        let mut acc: BTreeMap<String, (BTreeMap<u32, f64>, usize)> = BTreeMap::new();
        for part in parts {
            for (tag, row) in part.tags.iter().zip(&part.rows) {
                let entry = acc.entry(tag.clone()).or_default();
                for &(i, v) in row {
                    *entry.0.entry(i).or_insert(0.0) += v;
                }
                entry.1 += 1;
            }
        }
        let mut tags = Vec::new();
        let mut rows = Vec::new();
        let mut unmapped = BTreeSet::new();
        for (tag, (sum, count)) in acc {
            let averaged: BTreeMap<u32, f64> = sum
                .into_iter()
                .map(|(i, v)| (i, v / count as f64))
                .collect();
            let sparse = to_sparse(&averaged);
            if sparse.is_empty() {
                unmapped.insert(tag.clone());
            }
            tags.push(tag);
            rows.push(sparse);
        }
        Ok(MappingMatrix {
            system: name.to_string(),
            tags,
            rows,
            n_cols,
            unmapped,
        })
    }
}

/// Maps tags of ingested systems onto a pivot ontology.
pub struct KbMapper<'a> {
    pivot: &'a PivotOntology,
    norm: &'a Normalizer,
    graph: GenreGraph,
    /// canonical key -> pivot label indices sharing it.
    by_key: BTreeMap<String, Vec<u32>>,
    /// word -> pivot labels whose normalized form contains it.
    word_to_labels: BTreeMap<String, BTreeSet<u32>>,
    /// distinct words per pivot label.
    label_words: Vec<BTreeSet<String>>,
}

impl<'a> KbMapper<'a> {
    /// Aggregate the pivot (under `pivot_name`) and all `systems` into one
    /// genre graph and index the pivot labels for matching.
    pub fn new(
        pivot: &'a PivotOntology,
        pivot_name: &str,
        systems: &[&TagSystem],
        norm: &'a Normalizer,
    ) -> Result<Self> {
        let mut graph = GenreGraph::new();
        graph.add_tag_system(&pivot.as_tag_system(pivot_name), norm)?;
        for sys in systems {
            graph.add_tag_system(sys, norm)?;
        }
        let mut by_key: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        let mut word_to_labels: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
        let mut label_words = Vec::with_capacity(pivot.label_count());
        for idx in 0..pivot.label_count() as u32 {
            let form = norm.normalize_tag(pivot.label(idx))?;
            by_key
                .entry(form.canonical_key().to_string())
                .or_default()
                .push(idx);
            let words: BTreeSet<String> = form.word_set().iter().map(|w| w.to_string()).collect();
            for w in &words {
                word_to_labels.entry(w.clone()).or_default().insert(idx);
            }
            label_words.push(words);
        }
        Ok(KbMapper {
            pivot,
            norm,
            graph,
            by_key,
            word_to_labels,
            label_words,
        })
    }

    pub fn graph(&self) -> &GenreGraph {
        &self.graph
    }

    pub fn pivot(&self) -> &PivotOntology {
        self.pivot
    }

    fn score_groups(&self, groups: &BTreeSet<u32>, value: f64) -> BTreeMap<u32, f64> {
        let mut row = BTreeMap::new();
        for &g in groups {
            for &m in self.pivot.members(g) {
                row.insert(m, value);
            }
        }
        row
    }

    /// Exact canonical-key match. Every member of each matched alias group
    /// scores 1; a key shared by several pivot genres scores all of them.
    pub fn map_exact(&self, form: &NormalizedForm) -> Option<BTreeMap<u32, f64>> {
        let labels = self.by_key.get(form.canonical_key())?;
        let groups: BTreeSet<u32> = labels.iter().map(|&l| self.pivot.group_of(l)).collect();
        Some(self.score_groups(&groups, 1.0))
    }

    /// Compound the tag with each of its parents and retry the exact match;
    /// hits from several parents union, each at 1.
    pub fn map_with_parent(&self, system: &TagSystem, tag: &str) -> Option<BTreeMap<u32, f64>> {
        let mut groups = BTreeSet::new();
        for parent in system.parents_of(tag) {
            let compound = format!("{tag} {parent}");
            let Ok(form) = self.norm.normalize_tag(&compound) else {
                continue;
            };
            if let Some(labels) = self.by_key.get(form.canonical_key()) {
                groups.extend(labels.iter().map(|&l| self.pivot.group_of(l)));
            }
        }
        if groups.is_empty() {
            None
        } else {
            Some(self.score_groups(&groups, 1.0))
        }
    }

    /// Single-word tags: among the pivot genres whose name contains the
    /// word, keep those with maximal subgenre in-degree (alias groups
    /// contracted first); each keeper and its aliases score 1/k.
    pub fn map_concept_genre(&self, word: &str) -> Option<BTreeMap<u32, f64>> {
        let labels = self.word_to_labels.get(word)?;
        let candidates: BTreeSet<u32> = labels.iter().map(|&l| self.pivot.group_of(l)).collect();
        let degrees: BTreeMap<u32, usize> = candidates
            .iter()
            .map(|&g| (g, self.pivot.in_degree_within(g, &candidates)))
            .collect();
        let max_degree = *degrees.values().max()?;
        let selected: BTreeSet<u32> = degrees
            .iter()
            .filter(|&(_, &d)| d == max_degree)
            .map(|(&g, _)| g)
            .collect();
        Some(self.score_groups(&selected, 1.0 / selected.len() as f64))
    }

    /// Multi-word tags: candidates are the pivot genres sharing the most
    /// words with the tag; of these, keep the ones sharing the most
    /// concept-genre words unless no candidate shares any (then the initial
    /// selection is kept unchanged). Selected genres score 1/k by distinct
    /// alias group.
    pub fn map_composed_genre(&self, form: &NormalizedForm) -> Option<BTreeMap<u32, f64>> {
        let words: BTreeSet<String> = form.word_set().iter().map(|w| w.to_string()).collect();
        let mut shared: BTreeMap<u32, usize> = BTreeMap::new();
        for w in &words {
            if let Some(labels) = self.word_to_labels.get(w) {
                for &l in labels {
                    *shared.entry(l).or_insert(0) += 1;
                }
            }
        }
        let max_shared = *shared.values().max()?;
        let initial: Vec<u32> = shared
            .iter()
            .filter(|&(_, &c)| c == max_shared)
            .map(|(&l, _)| l)
            .collect();
        let concept_genre_count = |l: u32| -> usize {
            self.label_words[l as usize]
                .intersection(&words)
                .filter(|w| matches!(self.graph.classify_word(w), Ok(NodeKind::ConceptGenre)))
                .count()
        };
        let max_cg = initial.iter().map(|&l| concept_genre_count(l)).max()?;
        let selected_labels: Vec<u32> = if max_cg == 0 {
            initial
        } else {
            initial
                .into_iter()
                .filter(|&l| concept_genre_count(l) == max_cg)
                .collect()
        };
        let groups: BTreeSet<u32> = selected_labels
            .iter()
            .map(|&l| self.pivot.group_of(l))
            .collect();
        Some(self.score_groups(&groups, 1.0 / groups.len() as f64))
    }

    /// One hop of propagation: every pivot neighbor of a base-scored genre
    /// gains half that genre's base score, accumulating additively. Base
    /// scores themselves are left unchanged.
    pub fn propagate(&self, base: &BTreeMap<u32, f64>) -> BTreeMap<u32, f64> {
        let mut out = base.clone();
        let mut group_base: BTreeMap<u32, f64> = BTreeMap::new();
        for (&label, &v) in base {
            let g = self.pivot.group_of(label);
            let prev = group_base.insert(g, v);
            debug_assert!(
                prev.is_none() || prev == Some(v),
                "alias group members must carry equal scores"
            );
        }
        for (&g, &v) in &group_base {
            for neighbor in self.pivot.adjacent(g) {
                for &m in self.pivot.members(neighbor) {
                    *out.entry(m).or_insert(0.0) += v / 2.0;
                }
            }
        }
        out
    }

    /// Mean of the rows of the tag's related genres (parents, children,
    /// aliases) in `rows`; relatives without scores contribute zero rows to
    /// the mean. Empty when the tag has no relatives at all.
    pub fn fallback_average(
        &self,
        system: &TagSystem,
        tag: &str,
        rows: &BTreeMap<String, BTreeMap<u32, f64>>,
    ) -> BTreeMap<u32, f64> {
        let related = system.related_of(tag);
        if related.is_empty() {
            return BTreeMap::new();
        }
        let n = related.len() as f64;
        let mut sum: BTreeMap<u32, f64> = BTreeMap::new();
        for rel in related {
            if let Some(row) = rows.get(rel) {
                for (&i, &v) in row {
                    *sum.entry(i).or_insert(0.0) += v;
                }
            }
        }
        sum.into_iter().map(|(i, v)| (i, v / n)).collect()
    }

    /// Run the mapping cascade for one tag (steps 1–5, no fallback).
    pub fn map_tag(&self, system: &TagSystem, tag: &str) -> Result<Option<BTreeMap<u32, f64>>> {
        let form = self.norm.normalize_tag(tag)?;
        let base = self
            .map_exact(&form)
            .or_else(|| self.map_with_parent(system, tag))
            .or_else(|| {
                if form.tokens().len() == 1 {
                    self.map_concept_genre(&form.tokens()[0])
                } else {
                    self.map_composed_genre(&form)
                }
            });
        Ok(base.map(|b| self.propagate(&b)))
    }

    /// Map every tag of the system: the cascade first, then one fallback
    /// pass that averages related tags' rows for the misses.
    pub fn build_mapping_matrix(&self, system: &TagSystem) -> Result<MappingMatrix> {
        let tags = crate::tagsystem::sorted_tag_strings(system);
        let mut rows: BTreeMap<String, BTreeMap<u32, f64>> = BTreeMap::new();
        let mut missed: Vec<String> = Vec::new();
        for tag in &tags {
            match self.map_tag(system, tag)? {
                Some(row) => {
                    rows.insert(tag.clone(), row);
                }
                None => {
                    rows.insert(tag.clone(), BTreeMap::new());
                    missed.push(tag.clone());
                }
            }
        }
        let snapshot = rows.clone();
        let mut unmapped = BTreeSet::new();
        for tag in &missed {
            let averaged = self.fallback_average(system, tag, &snapshot);
            if averaged.is_empty() {
                unmapped.insert(tag.clone());
            }
            rows.insert(tag.clone(), averaged);
        }
        let sparse_rows: Vec<SparseRow> = tags.iter().map(|t| to_sparse(&rows[t])).collect();
        Ok(MappingMatrix {
            system: system.name().to_string(),
            tags,
            rows: sparse_rows,
            n_cols: self.pivot.label_count(),
            unmapped,
        })
    }
}

/// Source-to-target relatedness: rows are target tags, columns source tags,
/// entries the cosine similarity of the tags' pivot score rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationTable {
    targets: Vec<String>,
    sources: Vec<String>,
    weights: Array2<f64>,
}

fn sparse_dot(a: &SparseRow, b: &SparseRow) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    dot
}

fn sparse_norm(a: &SparseRow) -> f64 {
    a.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
}

/// Cosine-similarity table from a source mapping and a target mapping over
/// the same pivot. Entries are zero whenever either row is all-zero.
pub fn build_translation_table(
    source_map: &MappingMatrix,
    target_map: &MappingMatrix,
) -> Result<TranslationTable> {
    if source_map.n_cols != target_map.n_cols {
        return Err(Error::Dimension(format!(
            "mapping matrices use different pivots ({} vs {} labels)",
            source_map.n_cols, target_map.n_cols
        )));
    }
    let source_norms: Vec<f64> = source_map.rows.iter().map(sparse_norm).collect();
    let target_norms: Vec<f64> = target_map.rows.iter().map(sparse_norm).collect();
    let mut weights = Array2::zeros((target_map.tags.len(), source_map.tags.len()));
    for (t, t_row) in target_map.rows.iter().enumerate() {
        for (s, s_row) in source_map.rows.iter().enumerate() {
            let (nt, ns) = (target_norms[t], source_norms[s]);
            if nt == 0.0 || ns == 0.0 {
                continue;
            }
            weights[[t, s]] = (sparse_dot(t_row, s_row) / (nt * ns)).clamp(0.0, 1.0);
        }
    }
    Ok(TranslationTable {
        targets: target_map.tags.clone(),
        sources: source_map.tags.clone(),
        weights,
    })
}

impl TranslationTable {
    /// Build from explicit vocabularies and a dense weight matrix.
    pub fn new(targets: Vec<String>, sources: Vec<String>, weights: Array2<f64>) -> Result<Self> {
        if weights.nrows() != targets.len() || weights.ncols() != sources.len() {
            return Err(Error::Dimension(format!(
                "weights are {}x{} but vocabularies are {}x{}",
                weights.nrows(),
                weights.ncols(),
                targets.len(),
                sources.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "translation weights must be finite".to_string(),
            ));
        }
        Ok(TranslationTable {
            targets,
            sources,
            weights,
        })
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn get(&self, target: &str, source: &str) -> Option<f64> {
        let t = self.targets.iter().position(|x| x == target)?;
        let s = self.sources.iter().position(|x| x == source)?;
        Some(self.weights[[t, s]])
    }

    /// Score every target tag for one annotation: the sum over annotation
    /// tags of their table column (a binary-vector product). Annotation
    /// tags outside the source vocabulary are skipped and reported.
    pub fn kb_score<'t>(
        &self,
        annotation: impl IntoIterator<Item = &'t str>,
    ) -> (Vec<f64>, Vec<String>) {
        let mut unknown = Vec::new();
        let mut columns: Vec<usize> = Vec::new();
        for tag in annotation {
            match self.sources.iter().position(|s| s == tag) {
                Some(s) => columns.push(s),
                None => unknown.push(tag.to_string()),
            }
        }
        columns.sort_unstable();
        let mut scores = vec![0.0; self.targets.len()];
        for (t, score) in scores.iter_mut().enumerate() {
            for &s in &columns {
                *score += self.weights[[t, s]];
            }
        }
        (scores, unknown)
    }

    /// Dense weight matrix aligned to external vocabularies; tags absent
    /// from the table get zero rows/columns.
    pub fn aligned(&self, targets: &[String], sources: &[String]) -> Array2<f64> {
        let t_idx: BTreeMap<&str, usize> = self
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let s_idx: BTreeMap<&str, usize> = self
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut out = Array2::zeros((targets.len(), sources.len()));
        for (ti, t) in targets.iter().enumerate() {
            let Some(&t0) = t_idx.get(t.as_str()) else {
                continue;
            };
            for (si, s) in sources.iter().enumerate() {
                if let Some(&s0) = s_idx.get(s.as_str()) {
                    out[[ti, si]] = self.weights[[t0, s0]];
                }
            }
        }
        out
    }

    /// Tab-separated export: header row of source tags, one row per target
    /// tag, numbers at 9 significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.sources {
            out.push('\t');
            out.push_str(s);
        }
        out.push('\n');
        for (t, target) in self.targets.iter().enumerate() {
            out.push_str(target);
            for s in 0..self.sources.len() {
                out.push('\t');
                out.push_str(&fmt_sig9(self.weights[[t, s]]));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_tsv(text: &str, path: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty table file"))?;
        let mut header_fields = header.split('\t');
        if header_fields.next() != Some("") {
            return Err(Error::parse(
                path,
                1,
                "header must start with an empty cell",
            ));
        }
        let sources: Vec<String> = header_fields.map(str::to_string).collect();
        let mut targets = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let target = fields
                .next()
                .ok_or_else(|| Error::parse(path, ln + 1, "missing target tag"))?;
            targets.push(target.to_string());
            let mut count = 0;
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(path, ln + 1, format!("bad number {field:?}")))?;
                values.push(v);
                count += 1;
            }
            if count != sources.len() {
                return Err(Error::parse(
                    path,
                    ln + 1,
                    format!("expected {} values, found {count}", sources.len()),
                ));
            }
        }
        let weights = Array2::from_shape_vec((targets.len(), sources.len()), values)
            .map_err(|e| Error::parse(path, 1, e.to_string()))?;
        TranslationTable::new(targets, sources, weights)
    }
}
