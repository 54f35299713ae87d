//! Evaluation: macro ROC-AUC with Mann–Whitney tie handling, the
//! edit-distance baseline table, and the experiment runner that produces
//! learning curves over subsampling factors.

use ndarray::Array2;

use crate::corpus::{stratified_group_kfold, subsample, FoldAssignment, ParallelCorpus};
use crate::error::{Error, Result};
use crate::kb::TranslationTable;
use crate::logreg::{
    elicit_lambda, initial_model, train, PriorSpec, SourceTagCounts, TrainConfig, TrainMode,
};
use crate::normalize::Normalizer;
use crate::util::{fmt_sig9, sub_seed};

/// Probability that a uniformly chosen positive outranks a uniformly
/// chosen negative, ties counting one half (normalized Mann–Whitney U,
/// computed through average tie ranks). `None` when the labels are
/// single-class: such a tag is not evaluable.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos as f64 * neg as f64))
}

/// Per-tag AUCs of a score matrix against a binary label matrix, plus
/// their mean over the evaluable tags.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAuc {
    /// Per target tag; `None` marks a non-evaluable (single-class) tag.
    pub per_tag: Vec<Option<f64>>,
    /// Mean over evaluable tags; `None` when no tag is evaluable.
    pub macro_auc: Option<f64>,
    /// Indices of the skipped (non-evaluable) tags.
    pub skipped: Vec<usize>,
}

pub fn macro_auc(scores: &Array2<f64>, labels: &Array2<f64>) -> Result<MacroAuc> {
    if scores.dim() != labels.dim() {
        return Err(Error::Dimension(format!(
            "scores are {:?} but labels are {:?}",
            scores.dim(),
            labels.dim()
        )));
    }
    let mut per_tag = Vec::with_capacity(scores.ncols());
    let mut skipped = Vec::new();
    for t in 0..scores.ncols() {
        let col_scores: Vec<f64> = scores.column(t).to_vec();
        let col_labels: Vec<bool> = labels.column(t).iter().map(|&v| v != 0.0).collect();
        let auc = roc_auc(&col_scores, &col_labels);
        if auc.is_none() {
            skipped.push(t);
        }
        per_tag.push(auc);
    }
    let values: Vec<f64> = per_tag.iter().filter_map(|&a| a).collect();
    let macro_auc = if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    };
    Ok(MacroAuc {
        per_tag,
        macro_auc,
        skipped,
    })
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut cur = Vec::with_capacity(b.len() + 1);
        cur.push(i + 1);
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur.push((prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Text-similarity baseline: entry(t, s) = 1 − lev(k_t, k_s)/max(|k_t|,
/// |k_s|) on canonical keys, so identical keys score 1.
pub fn levenshtein_baseline(
    source_vocab: &[String],
    target_vocab: &[String],
    norm: &Normalizer,
) -> Result<TranslationTable> {
    if source_vocab.is_empty() || target_vocab.is_empty() {
        return Err(Error::Config(
            "baseline needs non-empty source and target vocabularies".to_string(),
        ));
    }
    let keys = |vocab: &[String]| -> Result<Vec<String>> {
        vocab
            .iter()
            .map(|t| Ok(norm.normalize_tag(t)?.canonical_key().to_string()))
            .collect()
    };
    let source_keys = keys(source_vocab)?;
    let target_keys = keys(target_vocab)?;
    let mut weights = Array2::zeros((target_vocab.len(), source_vocab.len()));
    for (t, kt) in target_keys.iter().enumerate() {
        let lt = kt.chars().count();
        for (s, ks) in source_keys.iter().enumerate() {
            let ls = ks.chars().count();
            let d = levenshtein(kt, ks);
            weights[[t, s]] = 1.0 - d as f64 / lt.max(ls) as f64;
        }
    }
    TranslationTable::new(target_vocab.to_vec(), source_vocab.to_vec(), weights)
}

/// A translation method evaluated by the experiment runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Knowledge-based table, data-independent.
    Kb,
    /// Edit-distance baseline, data-independent.
    Baseline,
    /// Maximum-likelihood logistic regression.
    Ml,
    /// MAP logistic regression with bias regularization (configured ν).
    Map,
    /// MAP with the bias prior disabled (ν = 0).
    MapNoBias,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Kb => "kb",
            Method::Baseline => "baseline",
            Method::Ml => "ml",
            Method::Map => "map",
            Method::MapNoBias => "map-nobias",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kb" => Ok(Method::Kb),
            "baseline" => Ok(Method::Baseline),
            "ml" => Ok(Method::Ml),
            "map" => Ok(Method::Map),
            "map-nobias" => Ok(Method::MapNoBias),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected kb, baseline, ml, map, or map-nobias)"
            ))),
        }
    }

    fn needs_table(&self) -> bool {
        matches!(self, Method::Kb | Method::Map | Method::MapNoBias)
    }
}

/// How the prior precision is chosen for MAP methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    /// Elicit from the mean source-annotation size of each training set.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub folds: usize,
    /// Subsampling factors, each in (0, 1].
    pub factors: Vec<f64>,
    pub seed: u64,
    /// Optimizer settings shared by all trained methods; the mode field
    /// is overridden per method.
    pub train: TrainConfig,
    pub lambda: LambdaChoice,
    /// Bias-prior strength for the `map` method.
    pub nu: f64,
    pub methods: Vec<Method>,
}

impl ExperimentConfig {
    /// The default grid: 14 factors, powers of two from 2⁻¹³ up to 1.
    pub fn default_factors() -> Vec<f64> {
        (-13..=0).map(|e| 2f64.powi(e)).collect()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            folds: 4,
            factors: ExperimentConfig::default_factors(),
            seed: 0,
            train: TrainConfig::default(),
            lambda: LambdaChoice::Auto,
            nu: 1.0,
            methods: vec![Method::Kb, Method::Baseline, Method::Ml, Method::Map],
        }
    }
}

/// One evaluated (method, factor, fold) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub factor: f64,
    pub fold: usize,
    pub n_train: usize,
    pub macro_auc: Option<f64>,
    /// Per target tag, aligned with the corpus target vocabulary.
    pub per_tag: Vec<Option<f64>>,
    /// Whether each target tag occurs in the (subsampled) training data.
    pub tag_in_train: Vec<bool>,
    /// λ actually used, for MAP methods.
    pub lambda_used: Option<f64>,
    /// Indices of non-evaluable target tags in this fold.
    pub skipped: Vec<usize>,
}

impl CellResult {
    /// Macro AUC restricted to tags whose training presence matches
    /// `in_train` — the report filter behind the missing-tag analysis.
    pub fn restricted_macro(&self, in_train: bool) -> Option<f64> {
        let values: Vec<f64> = self
            .per_tag
            .iter()
            .zip(&self.tag_in_train)
            .filter(|&(_, &present)| present == in_train)
            .filter_map(|(&auc, _)| auc)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

/// Aggregate of one (method, factor) pair over folds.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub method: Method,
    pub factor: f64,
    pub fold_macros: Vec<Option<f64>>,
    pub mean_macro: Option<f64>,
    /// Population standard deviation over folds with a defined macro AUC.
    pub std_macro: Option<f64>,
    pub mean_n_train: f64,
}

/// Everything an experiment run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellResult>,
    pub folds: FoldAssignment,
    target_vocab: Vec<String>,
    method_order: Vec<Method>,
    factor_order: Vec<f64>,
}

/// Run the fold × factor × method grid.
///
/// The KB table is an input, not something this function builds: the KB
/// and baseline scorers are data-independent, so their fold scores are
/// computed once and reused at every factor, which is what makes their
/// learning curves exactly constant.
pub fn run_experiment(
    corpus: &ParallelCorpus,
    kb_table: Option<&TranslationTable>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    if cfg.methods.is_empty() {
        return Err(Error::Config("no methods requested".to_string()));
    }
    if cfg.factors.is_empty() {
        return Err(Error::Config(
            "no subsampling factors requested".to_string(),
        ));
    }
    for &f in &cfg.factors {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!(
                "subsampling factors must lie in (0, 1], got {f}"
            )));
        }
    }
    if cfg.methods.iter().any(Method::needs_table) && kb_table.is_none() {
        return Err(Error::Config(
            "kb and map methods need a translation table".to_string(),
        ));
    }
    cfg.train.validate()?;
    if !(cfg.nu >= 0.0) {
        return Err(Error::Config(format!(
            "ν must be non-negative, got {}",
            cfg.nu
        )));
    }
    if let LambdaChoice::Fixed(l) = cfg.lambda {
        if !(l > 0.0) {
            return Err(Error::Config(format!("fixed λ must be positive, got {l}")));
        }
    }

    let source_vocab = corpus.source_vocab().to_vec();
    let target_vocab = corpus.target_vocab().to_vec();
    // Dense KB weights aligned to the corpus vocabularies; tags the table
    // does not know get zero rows/columns.
    let kb_weights = kb_table.map(|t| t.aligned(&target_vocab, &source_vocab));
    let baseline_weights = if cfg.methods.contains(&Method::Baseline) {
        let table = levenshtein_baseline(&source_vocab, &target_vocab, &Normalizer::basic())?;
        Some(table.aligned(&target_vocab, &source_vocab))
    } else {
        None
    };

    let folds = stratified_group_kfold(corpus, cfg.folds, sub_seed(cfg.seed, &[0]))?;
    let mut cells = Vec::new();
    for fold in 0..cfg.folds {
        let test_items = folds.fold_items(corpus, fold);
        let train_pool = folds.train_items(corpus, fold);
        let (x_test, y_test) = corpus.encode(&test_items);

        // Data-independent scorers: one evaluation per fold.
        let kb_eval = match &kb_weights {
            Some(w) if cfg.methods.contains(&Method::Kb) => {
                Some(macro_auc(&x_test.dot(&w.t()), &y_test)?)
            }
            _ => None,
        };
        let baseline_eval = match &baseline_weights {
            Some(w) => Some(macro_auc(&x_test.dot(&w.t()), &y_test)?),
            None => None,
        };

        for (fi, &factor) in cfg.factors.iter().enumerate() {
            let sub = subsample(&train_pool, factor, sub_seed(cfg.seed, &[1, fold as u64]))?;
            let (x_train, y_train) = corpus.encode(&sub);
            let tag_in_train: Vec<bool> = (0..target_vocab.len())
                .map(|t| y_train.column(t).iter().any(|&v| v != 0.0))
                .collect();

            for (mi, &method) in cfg.methods.iter().enumerate() {
                let (eval, lambda_used) = match method {
                    Method::Kb => (kb_eval.clone().unwrap(), None),
                    Method::Baseline => (baseline_eval.clone().unwrap(), None),
                    Method::Ml | Method::Map | Method::MapNoBias => {
                        let mut train_cfg = cfg.train.clone();
                        train_cfg.seed =
                            sub_seed(cfg.seed, &[2, fold as u64, fi as u64, mi as u64]);
                        let (model, lambda_used) = if method == Method::Ml {
                            train_cfg.mode = TrainMode::Ml;
                            let init = initial_model(
                                TrainMode::Ml,
                                source_vocab.clone(),
                                target_vocab.clone(),
                                None,
                            )?;
                            (train(&init, &x_train, &y_train, &train_cfg, None)?, None)
                        } else {
                            train_cfg.mode = TrainMode::Map;
                            let lambda = match cfg.lambda {
                                LambdaChoice::Fixed(l) => l,
                                LambdaChoice::Auto => {
                                    let counts = SourceTagCounts::from_design(&x_train);
                                    if counts.mean_tags > 0.0 {
                                        elicit_lambda(&counts)?
                                    } else {
                                        // Degenerate subsample with no
                                        // source tags at all: fall back to
                                        // a unit precision.
                                        1.0
                                    }
                                }
                            };
                            let nu = if method == Method::Map { cfg.nu } else { 0.0 };
                            let prior = PriorSpec::new(
                                kb_weights.as_ref().expect("checked above").clone(),
                                lambda,
                                nu,
                            )?;
                            let init = initial_model(
                                TrainMode::Map,
                                source_vocab.clone(),
                                target_vocab.clone(),
                                Some(&prior),
                            )?;
                            (
                                train(&init, &x_train, &y_train, &train_cfg, Some(&prior))?,
                                Some(lambda),
                            )
                        };
                        let scores = model.predict_matrix(&x_test)?;
                        (macro_auc(&scores, &y_test)?, lambda_used)
                    }
                };
                cells.push(CellResult {
                    method,
                    factor,
                    fold,
                    n_train: sub.len(),
                    macro_auc: eval.macro_auc,
                    per_tag: eval.per_tag,
                    tag_in_train: tag_in_train.clone(),
                    lambda_used,
                    skipped: eval.skipped,
                });
            }
        }
    }
    Ok(ExperimentOutcome {
        cells,
        folds,
        target_vocab,
        method_order: cfg.methods.clone(),
        factor_order: cfg.factors.clone(),
    })
}

fn fmt_opt(auc: Option<f64>) -> String {
    match auc {
        Some(v) => fmt_sig9(v),
        None => "NA".to_string(),
    }
}

impl ExperimentOutcome {
    fn sorted_cells(&self) -> Vec<&CellResult> {
        let method_rank = |m: Method| {
            self.method_order
                .iter()
                .position(|&x| x == m)
                .unwrap_or(usize::MAX)
        };
        let mut cells: Vec<&CellResult> = self.cells.iter().collect();
        cells.sort_by(|a, b| {
            method_rank(a.method)
                .cmp(&method_rank(b.method))
                .then(a.factor.total_cmp(&b.factor))
                .then(a.fold.cmp(&b.fold))
        });
        cells
    }

    /// Learning-curve file: `method TAB factor TAB fold TAB macro_auc TAB
    /// n_train`, one row per grid cell.
    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("method\tfactor\tfold\tmacro_auc\tn_train\n");
        for cell in self.sorted_cells() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                cell.method.label(),
                cell.factor,
                cell.fold,
                fmt_opt(cell.macro_auc),
                cell.n_train
            ));
        }
        out
    }

    /// Long-format per-tag companion file: `method TAB factor TAB fold TAB
    /// tag TAB auc TAB in_train`.
    pub fn per_tag_tsv(&self) -> String {
        let mut out = String::from("method\tfactor\tfold\ttag\tauc\tin_train\n");
        for cell in self.sorted_cells() {
            for (t, tag) in self.target_vocab.iter().enumerate() {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    cell.method.label(),
                    cell.factor,
                    cell.fold,
                    tag,
                    fmt_opt(cell.per_tag[t]),
                    u8::from(cell.tag_in_train[t])
                ));
            }
        }
        out
    }

    /// Per-(method, factor) aggregates over folds.
    pub fn reports(&self) -> Vec<EvalReport> {
        let mut reports = Vec::new();
        for &method in &self.method_order {
            for &factor in &self.factor_order {
                let fold_cells: Vec<&CellResult> = self
                    .cells
                    .iter()
                    .filter(|c| c.method == method && c.factor == factor)
                    .collect();
                if fold_cells.is_empty() {
                    continue;
                }
                let fold_macros: Vec<Option<f64>> =
                    fold_cells.iter().map(|c| c.macro_auc).collect();
                let values: Vec<f64> = fold_macros.iter().filter_map(|&m| m).collect();
                let (mean, std) = if values.is_empty() {
                    (None, None)
                } else {
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / values.len() as f64;
                    (Some(mean), Some(var.sqrt()))
                };
                let mean_n_train = fold_cells.iter().map(|c| c.n_train as f64).sum::<f64>()
                    / fold_cells.len() as f64;
                reports.push(EvalReport {
                    method,
                    factor,
                    fold_macros,
                    mean_macro: mean,
                    std_macro: std,
                    mean_n_train,
                });
            }
        }
        reports
    }

    /// Aligned text table: one row per factor, one column per method,
    /// cells showing mean±std of macro AUC over folds.
    pub fn summary_text(&self) -> String {
        let reports = self.reports();
        let cell_of = |method: Method, factor: f64| -> String {
            reports
                .iter()
                .find(|r| r.method == method && r.factor == factor)
                .and_then(|r| {
                    r.mean_macro
                        .map(|m| format!("{m:.4}±{:.4}", r.std_macro.unwrap_or(0.0)))
                })
                .unwrap_or_else(|| "NA".to_string())
        };
        let mut headers = vec!["factor".to_string()];
        headers.extend(self.method_order.iter().map(|m| m.label().to_string()));
        let mut rows: Vec<Vec<String>> = Vec::new();
        for &factor in &self.factor_order {
            let mut row = vec![format!("{factor}")];
            for &method in &self.method_order {
                row.push(cell_of(method, factor));
            }
            rows.push(row);
        }
        let mut widths: Vec<usize> = headers.iter().map(String::len).collect();
        for row in &rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let fmt_row = |cells: &[String]| -> String {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{:>width$}", c, width = widths[i]))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = fmt_row(&headers);
        out.push('\n');
        for row in &rows {
            out.push_str(&fmt_row(row));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn auc_ranks_perfect_and_inverted_orderings() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]), Some(1.0));
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]), Some(0.0));
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, true]), None);
        assert_eq!(roc_auc(&[0.5, 0.5], &[false, false]), None);
    }

    #[test]
    fn auc_counts_ties_as_one_half() {
        let auc = roc_auc(&[0.9, 0.5, 0.5, 0.1], &[true, true, false, false]).unwrap();
        // pairs: (0.9,0.5)=1, (0.9,0.1)=1, (0.5,0.5)=½, (0.5,0.1)=1 → 3.5/4
        assert_eq!(auc, 0.875);
    }

    fn brute_force_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        if pairs == 0.0 {
            None
        } else {
            Some(wins / pairs)
        }
    }

    #[test]
    fn auc_equals_pair_counting_on_random_instances() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.random_range(2..=50);
            // Discretized scores so ties actually occur.
            let scores: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0..8) as f64 / 8.0)
                .collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let fast = roc_auc(&scores, &labels);
            let slow = brute_force_auc(&scores, &labels);
            match (fast, slow) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                other => panic!("disagreement: {other:?}"),
            }
        }
    }

    #[test]
    fn auc_is_antisymmetric_without_ties() {
        let scores = [0.11, 0.52, 0.93, 0.24, 0.75, 0.36];
        let labels = [true, false, true, false, false, true];
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&neg, &labels).unwrap();
        assert_eq!(a + b, 1.0);
    }

    #[test]
    fn auc_is_exactly_invariant_under_representable_shifts_and_scales() {
        // Scores on a dyadic grid in [1, 2): adding small integers and
        // scaling by powers of two are exact in binary floating point, so
        // the ranks — and the AUC — cannot move at all.
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let scores: Vec<f64> = (0..40)
            .map(|_| 1.0 + rng.random_range(0..1 << 20) as f64 / (1 << 20) as f64)
            .collect();
        let labels: Vec<bool> = (0..40).map(|_| rng.random_bool(0.4)).collect();
        let base = roc_auc(&scores, &labels).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + 4.0).collect();
        let scaled: Vec<f64> = scores.iter().map(|s| s * 8.0).collect();
        assert_eq!(
            roc_auc(&shifted, &labels).unwrap().to_bits(),
            base.to_bits()
        );
        assert_eq!(roc_auc(&scaled, &labels).unwrap().to_bits(), base.to_bits());
    }

    #[test]
    fn macro_auc_averages_evaluable_tags_only() {
        let scores = arr2(&[
            [0.9, 0.9, 0.3],
            [0.5, 0.1, 0.3],
            [0.5, 0.8, 0.3],
            [0.1, 0.2, 0.3],
        ]);
        let labels = arr2(&[
            [1.0, 1.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0],
        ]);
        let result = macro_auc(&scores, &labels).unwrap();
        assert_eq!(result.per_tag[0], Some(0.875));
        assert_eq!(result.per_tag[1], Some(1.0));
        assert_eq!(result.per_tag[2], None);
        assert_eq!(result.macro_auc, Some((0.875 + 1.0) / 2.0));
        assert_eq!(result.skipped, vec![2]);
        // perfect scores on all evaluable tags
        let perfect = arr2(&[[1.0, 1.0], [0.0, 0.0]]);
        let l = arr2(&[[1.0, 1.0], [0.0, 0.0]]);
        assert_eq!(macro_auc(&perfect, &l).unwrap().macro_auc, Some(1.0));
    }

    #[test]
    fn column_shift_leaves_macro_auc_unchanged() {
        let scores = arr2(&[[1.25, 0.5], [1.5, 0.75], [1.0, 0.25], [1.125, 1.0]]);
        let labels = arr2(&[[1.0, 0.0], [1.0, 1.0], [0.0, 0.0], [0.0, 1.0]]);
        let base = macro_auc(&scores, &labels).unwrap();
        let mut shifted = scores.clone();
        for mut col in shifted.columns_mut() {
            col += 16.0;
        }
        let moved = macro_auc(&shifted, &labels).unwrap();
        assert_eq!(
            moved.macro_auc.unwrap().to_bits(),
            base.macro_auc.unwrap().to_bits()
        );
    }

    #[test]
    fn levenshtein_baseline_matches_hand_distances() {
        let norm = Normalizer::basic();
        let sources = vec!["pop".to_string(), "abc".to_string()];
        let targets = vec!["bop".to_string(), "xyz".to_string(), "Pop".to_string()];
        let table = levenshtein_baseline(&sources, &targets, &norm).unwrap();
        let third = 1.0 - 1.0 / 3.0;
        assert_eq!(table.get("bop", "pop").unwrap(), third);
        assert_eq!(table.get("xyz", "abc").unwrap(), 0.0);
        assert_eq!(table.get("Pop", "pop").unwrap(), 1.0);
        assert!(levenshtein_baseline(&[], &targets, &norm).is_err());
        // multi-word keys compare by canonical form
        let sources = vec!["pop rock".to_string()];
        let targets = vec!["Rock/Pop".to_string()];
        let table = levenshtein_baseline(&sources, &targets, &norm).unwrap();
        assert_eq!(table.get("Rock/Pop", "pop rock").unwrap(), 1.0);
    }

    fn tiny_corpus(n: usize, seed: u64) -> ParallelCorpus {
        use crate::corpus::AnnotatedItem;
        use std::collections::{BTreeMap, BTreeSet};
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sources = ["s_rock", "s_jazz", "s_pop"];
        let targets = ["t_rock", "t_jazz", "t_pop"];
        let mut items = Vec::new();
        for i in 0..n {
            let genre = rng.random_range(0..3);
            let mut src = BTreeSet::new();
            src.insert(sources[genre].to_string());
            if rng.random_bool(0.3) {
                src.insert(sources[(genre + 1) % 3].to_string());
            }
            let mut tgt = BTreeSet::new();
            tgt.insert(targets[genre].to_string());
            let mut source_annotations = BTreeMap::new();
            source_annotations.insert("sys".to_string(), src);
            items.push(AnnotatedItem {
                item_id: format!("i{i}"),
                artist_id: format!("a{}", i / 2),
                source_annotations,
                target_annotations: tgt,
            });
        }
        ParallelCorpus::from_items(items).unwrap()
    }

    fn diag_table(corpus: &ParallelCorpus) -> TranslationTable {
        // s_rock → t_rock etc: a club-diagonal table.
        let t = corpus.target_vocab().to_vec();
        let s = corpus.source_vocab().to_vec();
        let mut w = Array2::zeros((t.len(), s.len()));
        for (ti, tt) in t.iter().enumerate() {
            for (si, st) in s.iter().enumerate() {
                if tt.trim_start_matches("t_") == st.trim_start_matches("s_") {
                    w[[ti, si]] = 1.0;
                }
            }
        }
        TranslationTable::new(t, s, w).unwrap()
    }

    fn smoke_config() -> ExperimentConfig {
        ExperimentConfig {
            folds: 4,
            factors: vec![0.5, 1.0],
            seed: 3,
            train: TrainConfig {
                epochs: 40,
                learning_rate: 0.1,
                ..TrainConfig::default()
            },
            lambda: LambdaChoice::Auto,
            nu: 1.0,
            methods: vec![Method::Kb, Method::Baseline, Method::Ml, Method::Map],
        }
    }

    #[test]
    fn experiment_grid_produces_all_cells_and_constant_kb() {
        let corpus = tiny_corpus(48, 1);
        let table = diag_table(&corpus);
        let outcome = run_experiment(&corpus, Some(&table), &smoke_config()).unwrap();
        assert_eq!(outcome.cells.len(), 4 * 2 * 4);
        // KB and baseline cells are identical across factors, exactly.
        for method in [Method::Kb, Method::Baseline] {
            for fold in 0..4 {
                let values: Vec<Option<f64>> = outcome
                    .cells
                    .iter()
                    .filter(|c| c.method == method && c.fold == fold)
                    .map(|c| c.macro_auc)
                    .collect();
                assert_eq!(values.len(), 2);
                assert_eq!(values[0], values[1]);
            }
        }
        // The diagonal table ranks the matching genre first.
        let kb_mean = outcome
            .reports()
            .iter()
            .find(|r| r.method == Method::Kb)
            .unwrap()
            .mean_macro
            .unwrap();
        assert!(kb_mean > 0.9, "kb macro {kb_mean}");
    }

    #[test]
    fn experiment_outputs_are_deterministic() {
        let corpus = tiny_corpus(32, 2);
        let table = diag_table(&corpus);
        let cfg = smoke_config();
        let a = run_experiment(&corpus, Some(&table), &cfg).unwrap();
        let b = run_experiment(&corpus, Some(&table), &cfg).unwrap();
        assert_eq!(a.curve_tsv(), b.curve_tsv());
        assert_eq!(a.per_tag_tsv(), b.per_tag_tsv());
        assert_eq!(a.summary_text(), b.summary_text());
        // files carry the expected shapes
        assert_eq!(a.curve_tsv().lines().count(), 1 + a.cells.len());
        let per_tag_rows = a.cells.len() * corpus.target_vocab().len();
        assert_eq!(a.per_tag_tsv().lines().count(), 1 + per_tag_rows);
    }

    #[test]
    fn missing_table_for_table_methods_is_a_usage_error() {
        let corpus = tiny_corpus(16, 3);
        let cfg = smoke_config();
        assert!(matches!(
            run_experiment(&corpus, None, &cfg),
            Err(Error::Config(_))
        ));
        let ml_only = ExperimentConfig {
            methods: vec![Method::Baseline, Method::Ml],
            factors: vec![1.0],
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            ..smoke_config()
        };
        assert!(run_experiment(&corpus, None, &ml_only).is_ok());
    }

    #[test]
    fn restricted_macro_filters_by_training_presence() {
        let cell = CellResult {
            method: Method::Kb,
            factor: 1.0,
            fold: 0,
            n_train: 10,
            macro_auc: Some(0.8),
            per_tag: vec![Some(0.9), Some(0.7), None, Some(0.5)],
            tag_in_train: vec![true, false, false, false],
            lambda_used: None,
            skipped: vec![2],
        };
        assert_eq!(cell.restricted_macro(true), Some(0.9));
        assert_eq!(cell.restricted_macro(false), Some(0.6));
    }
}
