//! Command-line surface: one subcommand per pipeline stage, so every
//! intermediate artifact (normalized tags, translation table, model
//! checkpoint, learning curves) is an inspectable file.
//!
//! Every run writes a `manifest.json` next to its outputs recording the
//! inputs, the resolved configuration, and a SHA-256 digest of each output
//! file. All files go through write-then-rename, so a failed run never
//! leaves a partially written file behind.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{parse_source_field, ParallelCorpus};
use crate::error::{Error, Result};
use crate::eval::{run_experiment, ExperimentConfig, LambdaChoice, Method};
use crate::kb::{build_translation_table, KbMapper, MappingMatrix, TranslationTable};
use crate::logreg::{
    elicit_lambda, initial_model, map_loss, ml_loss, train, LogisticModel, PriorSpec,
    SourceTagCounts, TrainConfig, TrainMode,
};
use crate::manifest::RunManifest;
use crate::normalize::{build_trie, AssessConfig, Normalizer, SplitOutcome, DIRECT_INSERT_LEN};
use crate::ontology::PivotOntology;
use crate::tagsystem::TagSystem;
use crate::util::{atomic_write, fmt_sig9, read_to_string};
use crate::zipf::WordFrequencyTable;

#[derive(Debug, Parser)]
#[command(
    name = "tagtrans",
    version,
    about = "Translate genre tags between tag systems",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a file of raw tags into canonical forms.
    Normalize(NormalizeArgs),
    /// Build a source→target translation table through a pivot ontology.
    KbMap(KbMapArgs),
    /// Train a translation model on a parallel corpus.
    Train(TrainArgs),
    /// Score annotations and emit ranked target tags per item.
    Translate(TranslateArgs),
    /// Run the fold × factor × method learning-curve grid.
    Experiment(ExperimentArgs),
}

/// Parse and run. Returns the process exit code: 0 success, 1 usage
/// error, 2 data error, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return code;
        }
    };
    match cli.command.execute() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl Command {
    fn execute(&self) -> Result<()> {
        match self {
            Command::Normalize(args) => args.execute(),
            Command::KbMap(args) => args.execute(),
            Command::Train(args) => args.execute(),
            Command::Translate(args) => args.execute(),
            Command::Experiment(args) => args.execute(),
        }
    }
}

#[derive(Debug, Args)]
struct OutDirArg {
    /// Directory the outputs and the manifest are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Write all output files plus the manifest into the output directory.
fn emit(out_dir: &Path, manifest: &mut RunManifest, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, content) in files {
        let path = out_dir.join(name);
        atomic_write(&path, content.as_bytes())?;
        manifest.record_output(name, content.as_bytes());
        eprintln!("wrote {}", path.display());
    }
    let manifest_path = manifest.save(out_dir)?;
    eprintln!("wrote {}", manifest_path.display());
    Ok(())
}

fn parse_lambda(s: &str) -> Result<LambdaChoice> {
    if s == "auto" {
        return Ok(LambdaChoice::Auto);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Config(format!("--lambda takes \"auto\" or a number, got {s:?}")))?;
    if !(v > 0.0) {
        return Err(Error::Config(format!("λ must be positive, got {v}")));
    }
    Ok(LambdaChoice::Fixed(v))
}

fn load_taxonomies(paths: &[PathBuf]) -> Result<Vec<TagSystem>> {
    paths.iter().map(|p| TagSystem::load(p)).collect()
}

/// Assemble a normalizer from optional vocabulary sources: the splitting
/// trie is built from all given taxonomies plus the pivot's labels, the
/// probabilistic segmenter from a ranked word list.
fn build_normalizer(
    systems: &[&TagSystem],
    pivot: &PivotOntology,
    unigrams: Option<&PathBuf>,
    assess_config: Option<&PathBuf>,
) -> Result<Normalizer> {
    let trie = build_trie(systems, pivot, DIRECT_INSERT_LEN);
    let freq = match unigrams {
        Some(path) => WordFrequencyTable::from_file(path)?,
        None => WordFrequencyTable::empty(),
    };
    let assess = match assess_config {
        Some(path) => {
            let text = read_to_string(path)?;
            AssessConfig::from_key_value_text(&text, &path.display().to_string())?
        }
        None => AssessConfig::default(),
    };
    Ok(Normalizer::new(trie, freq, assess))
}

#[derive(Debug, Args)]
struct NormalizeArgs {
    /// File with one raw tag per line (blank lines are skipped).
    tags: PathBuf,
    /// Pivot ontology file; its label words seed the splitting trie.
    #[arg(long)]
    ontology: Option<PathBuf>,
    /// Tag-system file whose tokens feed the splitting trie; repeatable.
    #[arg(long = "taxonomy")]
    taxonomies: Vec<PathBuf>,
    /// Ranked word list (most frequent first) for the probabilistic
    /// segmenter.
    #[arg(long)]
    unigrams: Option<PathBuf>,
    /// key=value file of split-assessment thresholds.
    #[arg(long)]
    assess_config: Option<PathBuf>,
    #[command(flatten)]
    out: OutDirArg,
}

impl NormalizeArgs {
    fn execute(&self) -> Result<()> {
        let systems = load_taxonomies(&self.taxonomies)?;
        let system_refs: Vec<&TagSystem> = systems.iter().collect();
        let pivot = match &self.ontology {
            Some(path) => PivotOntology::load(path)?,
            None => PivotOntology::empty(),
        };
        let norm = build_normalizer(
            &system_refs,
            &pivot,
            self.unigrams.as_ref(),
            self.assess_config.as_ref(),
        )?;

        let text = read_to_string(&self.tags)?;
        let mut rows = String::new();
        let (mut n_tags, mut trie_split, mut zipf_split, mut unsplit) =
            (0usize, 0usize, 0usize, 0usize);
        for line in text.lines() {
            let raw = line.trim();
            if raw.is_empty() {
                continue;
            }
            let (form, outcomes) = norm.normalize_tag_traced(raw)?;
            n_tags += 1;
            for outcome in &outcomes {
                match outcome {
                    SplitOutcome::TrieSplit => trie_split += 1,
                    SplitOutcome::ZipfSplit => zipf_split += 1,
                    SplitOutcome::Unsplit => unsplit += 1,
                }
            }
            rows.push_str(&format!(
                "{}\t{}\t{}\n",
                raw,
                form.canonical_key(),
                form.tokens().join(" ")
            ));
        }

        let mut manifest = RunManifest::new("normalize", 0);
        manifest.record_input("tags", &self.tags);
        if let Some(p) = &self.ontology {
            manifest.record_input("ontology", p);
        }
        for (i, p) in self.taxonomies.iter().enumerate() {
            manifest.record_input(&format!("taxonomy.{i}"), p);
        }
        if let Some(p) = &self.unigrams {
            manifest.record_input("unigrams", p);
        }
        if let Some(p) = &self.assess_config {
            manifest.record_input("assess_config", p);
        }
        manifest.set_config("direct_insert_len", DIRECT_INSERT_LEN);
        manifest.set_stat("tags", n_tags);
        manifest.set_stat("trie_split", trie_split);
        manifest.set_stat("zipf_split", zipf_split);
        manifest.set_stat("unsplit", unsplit);
        emit(
            &self.out.out_dir,
            &mut manifest,
            &[("normalized.tsv", rows)],
        )
    }
}

#[derive(Debug, Args)]
struct KbMapArgs {
    /// Pivot ontology file.
    #[arg(long)]
    ontology: PathBuf,
    /// Tag-system files (named by file stem); repeatable. One of them is
    /// the target, the rest are merged as sources.
    #[arg(long = "taxonomy", required = true)]
    taxonomies: Vec<PathBuf>,
    /// Name of the taxonomy to treat as the target system.
    #[arg(long)]
    target: String,
    /// Ranked word list for the probabilistic segmenter.
    #[arg(long)]
    unigrams: Option<PathBuf>,
    /// key=value file of split-assessment thresholds.
    #[arg(long)]
    assess_config: Option<PathBuf>,
    #[command(flatten)]
    out: OutDirArg,
}

impl KbMapArgs {
    fn execute(&self) -> Result<()> {
        let pivot = PivotOntology::load(&self.ontology)?;
        let systems = load_taxonomies(&self.taxonomies)?;
        let target_sys = systems
            .iter()
            .find(|s| s.name() == self.target)
            .ok_or_else(|| {
                let known: Vec<&str> = systems.iter().map(TagSystem::name).collect();
                Error::Config(format!(
                    "--target {:?} names none of the given taxonomies {known:?}",
                    self.target
                ))
            })?;
        let source_systems: Vec<&TagSystem> =
            systems.iter().filter(|s| s.name() != self.target).collect();
        if source_systems.is_empty() {
            return Err(Error::Config(
                "need at least one source taxonomy besides the target".to_string(),
            ));
        }

        let all_refs: Vec<&TagSystem> = systems.iter().collect();
        let norm = build_normalizer(
            &all_refs,
            &pivot,
            self.unigrams.as_ref(),
            self.assess_config.as_ref(),
        )?;
        let pivot_name = self
            .ontology
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pivot".to_string());
        let mapper = KbMapper::new(&pivot, &pivot_name, &all_refs, &norm)?;

        let source_maps: Vec<MappingMatrix> = source_systems
            .iter()
            .map(|sys| mapper.build_mapping_matrix(sys))
            .collect::<Result<_>>()?;
        let source_map = if source_maps.len() == 1 {
            source_maps.into_iter().next().unwrap()
        } else {
            let refs: Vec<&MappingMatrix> = source_maps.iter().collect();
            MappingMatrix::merge(&refs, "sources")?
        };
        let target_map = mapper.build_mapping_matrix(target_sys)?;
        let table = build_translation_table(&source_map, &target_map)?;

        let mut manifest = RunManifest::new("kb-map", 0);
        manifest.record_input("ontology", &self.ontology);
        for (i, p) in self.taxonomies.iter().enumerate() {
            manifest.record_input(&format!("taxonomy.{i}"), p);
        }
        if let Some(p) = &self.unigrams {
            manifest.record_input("unigrams", p);
        }
        if let Some(p) = &self.assess_config {
            manifest.record_input("assess_config", p);
        }
        manifest.set_config("target", &self.target);
        manifest.set_config("direct_insert_len", DIRECT_INSERT_LEN);
        manifest.set_stat("pivot_labels", pivot.label_count());
        manifest.set_stat("source_tags", source_map.tags.len());
        manifest.set_stat("target_tags", target_map.tags.len());
        manifest.set_stat("source_unmapped", source_map.unmapped.len());
        manifest.set_stat("target_unmapped", target_map.unmapped.len());
        emit(
            &self.out.out_dir,
            &mut manifest,
            &[("table.tsv", table.to_tsv())],
        )
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Parallel corpus file.
    corpus: PathBuf,
    /// Training objective: "ml" or "map".
    #[arg(long, default_value = "ml")]
    mode: String,
    /// Translation table used as the prior mean (map mode only).
    #[arg(long)]
    prior_table: Option<PathBuf>,
    /// Prior precision: "auto" to elicit from annotation sizes, or a
    /// positive number (map mode only).
    #[arg(long)]
    lambda: Option<String>,
    /// Bias-prior strength (map mode only).
    #[arg(long)]
    nu: Option<f64>,
    /// Learning rate.
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 100_000)]
    batch_size: usize,
    /// L2 coefficient on the weights (ml mode only).
    #[arg(long)]
    l2: Option<f64>,
    /// Seed for the minibatch shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutDirArg,
}

impl TrainArgs {
    fn execute(&self) -> Result<()> {
        let mode = match self.mode.as_str() {
            "ml" => TrainMode::Ml,
            "map" => TrainMode::Map,
            other => {
                return Err(Error::Config(format!(
                    "--mode takes \"ml\" or \"map\", got {other:?}"
                )));
            }
        };
        if mode == TrainMode::Ml {
            if self.prior_table.is_some() || self.lambda.is_some() || self.nu.is_some() {
                return Err(Error::Config(
                    "--prior-table, --lambda, and --nu apply to map mode only".to_string(),
                ));
            }
        } else if self.prior_table.is_none() {
            return Err(Error::Config(
                "map mode needs --prior-table with the translation table".to_string(),
            ));
        }

        let corpus = ParallelCorpus::load(&self.corpus)?;
        let all: Vec<usize> = (0..corpus.len()).collect();
        let (x, y) = corpus.encode(&all);

        let cfg = TrainConfig {
            mode,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            l2: self.l2.unwrap_or(1.0),
            seed: self.seed,
            ..TrainConfig::default()
        };

        let mut manifest = RunManifest::new("train", self.seed);
        manifest.record_input("corpus", &self.corpus);
        manifest.set_config("mode", &self.mode);
        manifest.set_config("lr", self.lr);
        manifest.set_config("epochs", self.epochs);
        manifest.set_config("batch_size", self.batch_size);
        manifest.set_stat("items", corpus.len());
        manifest.set_stat("dropped_empty_target", corpus.dropped_empty_target);
        manifest.set_stat("source_tags", corpus.source_vocab().len());
        manifest.set_stat("target_tags", corpus.target_vocab().len());

        let prior = match mode {
            TrainMode::Ml => {
                manifest.set_config("l2", cfg.l2);
                None
            }
            TrainMode::Map => {
                let path = self.prior_table.as_ref().expect("checked above");
                let text = read_to_string(path)?;
                let table = TranslationTable::parse_tsv(&text, &path.display().to_string())?;
                manifest.record_input("prior_table", path);
                let mean = table.aligned(corpus.target_vocab(), corpus.source_vocab());
                let lambda_flag = self.lambda.as_deref().unwrap_or("auto");
                let lambda = match parse_lambda(lambda_flag)? {
                    LambdaChoice::Fixed(l) => {
                        manifest.set_config("lambda_mode", "fixed");
                        l
                    }
                    LambdaChoice::Auto => {
                        manifest.set_config("lambda_mode", "auto");
                        elicit_lambda(&SourceTagCounts::from_design(&x))?
                    }
                };
                manifest.set_config("lambda", lambda);
                let nu = self.nu.unwrap_or(1.0);
                manifest.set_config("nu", nu);
                Some(PriorSpec::new(mean, lambda, nu)?)
            }
        };

        let init = initial_model(
            mode,
            corpus.source_vocab().to_vec(),
            corpus.target_vocab().to_vec(),
            prior.as_ref(),
        )?;
        let loss_of = |model: &LogisticModel| -> Result<f64> {
            match (&prior, mode) {
                (Some(p), TrainMode::Map) => map_loss(model, &x, &y, p),
                _ => ml_loss(model, &x, &y, cfg.l2),
            }
        };
        let initial_loss = loss_of(&init)?;
        let model = train(&init, &x, &y, &cfg, prior.as_ref())?;
        let final_loss = loss_of(&model)?;
        manifest.set_stat("initial_loss", fmt_sig9(initial_loss));
        manifest.set_stat("final_loss", fmt_sig9(final_loss));

        emit(
            &self.out.out_dir,
            &mut manifest,
            &[("model.ckpt", model.to_checkpoint())],
        )
    }
}

#[derive(Debug, Args)]
struct TranslateArgs {
    /// Annotation file: `item_id TAB sys:tag;tag|sys2:tag` per line.
    annotations: PathBuf,
    /// Model checkpoint to score with.
    #[arg(long, conflicts_with = "table")]
    model: Option<PathBuf>,
    /// Translation table to score with.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Keep only the k best target tags per item.
    #[arg(long)]
    top_k: Option<usize>,
    #[command(flatten)]
    out: OutDirArg,
}

enum Scorer {
    Model(Box<LogisticModel>),
    Table(TranslationTable),
}

impl Scorer {
    fn targets(&self) -> &[String] {
        match self {
            Scorer::Model(m) => m.target_vocab(),
            Scorer::Table(t) => t.targets(),
        }
    }

    fn score<'t>(&self, tags: impl IntoIterator<Item = &'t str>) -> (Vec<f64>, Vec<String>) {
        match self {
            Scorer::Model(m) => {
                let (scores, unknown) = m.stat_score(tags);
                (scores.to_vec(), unknown)
            }
            Scorer::Table(t) => t.kb_score(tags),
        }
    }
}

impl TranslateArgs {
    fn execute(&self) -> Result<()> {
        let scorer = match (&self.model, &self.table) {
            (Some(path), None) => Scorer::Model(Box::new(LogisticModel::load(path)?)),
            (None, Some(path)) => {
                let text = read_to_string(path)?;
                Scorer::Table(TranslationTable::parse_tsv(
                    &text,
                    &path.display().to_string(),
                )?)
            }
            _ => {
                return Err(Error::Config(
                    "pass exactly one of --model or --table".to_string(),
                ));
            }
        };

        let path_str = self.annotations.display().to_string();
        let text = read_to_string(&self.annotations)?;
        let mut rows = String::new();
        let mut n_items = 0usize;
        let mut n_unknown = 0usize;
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(
                    &path_str,
                    ln + 1,
                    format!("expected 2 tab-separated fields, found {}", fields.len()),
                ));
            }
            let item_id = fields[0].trim();
            if item_id.is_empty() {
                return Err(Error::parse(&path_str, ln + 1, "empty item id"));
            }
            let annotations = parse_source_field(fields[1], &path_str, ln + 1)?;
            let tags: Vec<&str> = annotations
                .values()
                .flat_map(|set| set.iter().map(String::as_str))
                .collect();
            let (scores, unknown) = scorer.score(tags);
            if !unknown.is_empty() {
                eprintln!(
                    "warning: item {item_id}: unknown source tags: {}",
                    unknown.join(", ")
                );
                n_unknown += unknown.len();
            }
            let targets = scorer.targets();
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .total_cmp(&scores[a])
                    .then_with(|| targets[a].cmp(&targets[b]))
            });
            if let Some(k) = self.top_k {
                order.truncate(k);
            }
            for (rank, &t) in order.iter().enumerate() {
                rows.push_str(&format!(
                    "{item_id}\t{}\t{}\t{}\n",
                    rank + 1,
                    targets[t],
                    fmt_sig9(scores[t])
                ));
            }
            n_items += 1;
        }

        let mut manifest = RunManifest::new("translate", 0);
        manifest.record_input("annotations", &self.annotations);
        if let Some(p) = &self.model {
            manifest.record_input("model", p);
        }
        if let Some(p) = &self.table {
            manifest.record_input("table", p);
        }
        if let Some(k) = self.top_k {
            manifest.set_config("top_k", k);
        }
        manifest.set_stat("items", n_items);
        manifest.set_stat("unknown_tags", n_unknown);
        emit(
            &self.out.out_dir,
            &mut manifest,
            &[("translations.tsv", rows)],
        )
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Parallel corpus file.
    corpus: PathBuf,
    /// Translation table for the kb scorer and the MAP prior.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Comma-separated subset of: kb, baseline, ml, map, map-nobias.
    #[arg(long, default_value = "kb,baseline,ml,map")]
    methods: String,
    #[arg(long, default_value_t = 4)]
    folds: usize,
    /// Comma-separated subsampling factors in (0, 1]. Defaults to the
    /// 14 powers of two from 2⁻¹³ up to 1.
    #[arg(long)]
    factors: Option<String>,
    /// Prior precision: "auto" or a positive number.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// Bias-prior strength for the map method.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Learning rate.
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 100_000)]
    batch_size: usize,
    /// L2 coefficient on the weights for the ml method.
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutDirArg,
}

impl ExperimentArgs {
    fn execute(&self) -> Result<()> {
        let methods: Vec<Method> = self
            .methods
            .split(',')
            .map(|m| Method::parse(m.trim()))
            .collect::<Result<_>>()?;
        let factors = match &self.factors {
            Some(csv) => csv
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad subsampling factor {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?,
            None => ExperimentConfig::default_factors(),
        };
        let lambda = parse_lambda(&self.lambda)?;

        let corpus = ParallelCorpus::load(&self.corpus)?;
        let table = match &self.table {
            Some(path) => {
                let text = read_to_string(path)?;
                Some(TranslationTable::parse_tsv(
                    &text,
                    &path.display().to_string(),
                )?)
            }
            None => None,
        };

        let cfg = ExperimentConfig {
            folds: self.folds,
            factors: factors.clone(),
            seed: self.seed,
            train: TrainConfig {
                learning_rate: self.lr,
                epochs: self.epochs,
                batch_size: self.batch_size,
                l2: self.l2,
                seed: self.seed,
                ..TrainConfig::default()
            },
            lambda,
            nu: self.nu,
            methods: methods.clone(),
        };
        let outcome = run_experiment(&corpus, table.as_ref(), &cfg)?;

        let mut manifest = RunManifest::new("experiment", self.seed);
        manifest.record_input("corpus", &self.corpus);
        if let Some(p) = &self.table {
            manifest.record_input("table", p);
        }
        manifest.set_config(
            "methods",
            methods
                .iter()
                .map(Method::label)
                .collect::<Vec<_>>()
                .join(","),
        );
        manifest.set_config("folds", self.folds);
        manifest.set_config(
            "factors",
            factors
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        manifest.set_config("lambda", &self.lambda);
        manifest.set_config("nu", self.nu);
        manifest.set_config("lr", self.lr);
        manifest.set_config("epochs", self.epochs);
        manifest.set_config("batch_size", self.batch_size);
        manifest.set_config("l2", self.l2);
        manifest.set_stat("items", corpus.len());
        manifest.set_stat("dropped_empty_target", corpus.dropped_empty_target);
        manifest.set_stat("cells", outcome.cells.len());

        let files = [
            ("curve.tsv", outcome.curve_tsv()),
            ("per_tag.tsv", outcome.per_tag_tsv()),
            ("summary.txt", outcome.summary_text()),
            ("folds.tsv", outcome.folds.dump()),
        ];
        emit(&self.out.out_dir, &mut manifest, &files)
    }
}
