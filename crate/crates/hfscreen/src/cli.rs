//! Command-line driver for batch surveillance runs and experiments.
//!
//! Settings resolve in three layers: built-in defaults, then the JSON
//! config file given with `--config`, then command-line flags. Exit codes
//! are stable for scripting: 0 success, 1 usage or configuration error,
//! 2 data error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::corpus::{
    apply_gold_labels, generate_synthetic_corpus, ingest_notes, load_gold_labels, Corpus,
    FineLabel, SynthesisSpec,
};
use crate::error::{Error, Result};
use crate::eval::{confusion_counts, compute_metrics, cross_validate, MetricsReport};
use crate::extraction::{extract_data_elements_with, KeywordLexicon};
use crate::features::{build_vocabulary, featurize, FeaturizerConfig, Vocabulary};
use crate::ioutil::atomic_write;
use crate::models::{
    compute_class_weights, load_model, predict, save_model, top_features, train_model,
    ClassWeighting, ClassWeights, FeatureSpace, ModelKind, TrainConfig,
};
use crate::negation::{TriggerLexicon, DEFAULT_WINDOW};
use crate::ruleclf::classify_rules;
use crate::textprep::PreprocessConfig;

#[derive(Parser)]
#[command(
    name = "hfscreen",
    version,
    about = "Screen per-patient clinical notes for active heart failure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus (corpus.jsonl + labels.jsonl)
    Synth(CommonArgs),
    /// Validate and aggregate raw notes into per-patient profiles
    Ingest(CommonArgs),
    /// Run the rule-based classifier; report metrics when labels are given
    Rules(CommonArgs),
    /// Build the bigram vocabulary and per-patient feature vectors
    Featurize(CommonArgs),
    /// Train a model on a labeled corpus (writes model.json + vocabulary.json)
    Train(CommonArgs),
    /// Predict colors for a corpus with a trained model
    Predict(CommonArgs),
    /// Stratified k-fold cross-validation; --all-models compares all four
    Cv(CommonArgs),
    /// Show the most predictive bigrams of a linear model (--k per class)
    TopFeatures(CommonArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus JSONL file or directory of *.jsonl files
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Gold-label sidecar JSONL
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Trained model file (vocabulary.json is read from the same directory)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output file or directory, depending on the command
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every randomized step of the command
    #[arg(long)]
    seed: Option<u64>,
    /// Folds for cv; ranked bigrams per class for top-features
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_name = "nb|logreg|linsvm|rbfsvm")]
    model_kind: Option<String>,
    /// Compare all four model kinds over the same folds
    #[arg(long)]
    all_models: bool,
    #[arg(long)]
    min_df: Option<f64>,
    #[arg(long)]
    max_df: Option<f64>,
    #[arg(long)]
    min_token_len: Option<usize>,
    #[arg(long)]
    negation_window: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    corpus: Option<PathBuf>,
    labels: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    keywords: Option<PathBuf>,
    triggers: Option<PathBuf>,
    seed: Option<u64>,
    k: Option<usize>,
    model_kind: Option<String>,
    all_models: Option<bool>,
    min_df: Option<f64>,
    max_df: Option<f64>,
    min_token_len: Option<usize>,
    negation_window: Option<usize>,
    train: Option<TrainConfig>,
    synthesis: Option<SynthesisSpec>,
}

/// Fully resolved settings for one command invocation.
struct Settings {
    corpus: Option<PathBuf>,
    labels: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    keywords: Option<PathBuf>,
    triggers: Option<PathBuf>,
    seed: Option<u64>,
    k: Option<usize>,
    model_kind: ModelKind,
    all_models: bool,
    featurizer: FeaturizerConfig,
    negation_window: usize,
    train: TrainConfig,
    synthesis: Option<SynthesisSpec>,
}

impl Settings {
    fn resolve(args: &CommonArgs) -> Result<Settings> {
        let file: RunConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::InvalidConfig(format!("bad config {}: {e}", path.display()))
                })?
            }
            None => RunConfig::default(),
        };

        let mut preprocess = match &file.stopwords {
            Some(path) => PreprocessConfig::with_stopwords_file(path)?,
            None => PreprocessConfig::default(),
        };
        if let Some(n) = args.min_token_len.or(file.min_token_len) {
            preprocess.min_token_len = n;
        }
        let featurizer = FeaturizerConfig {
            min_df: args.min_df.or(file.min_df).unwrap_or(0.2),
            max_df: args.max_df.or(file.max_df).unwrap_or(0.8),
            preprocess,
        };
        featurizer.validate()?;

        let model_kind = args
            .model_kind
            .clone()
            .or(file.model_kind)
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(ModelKind::LinearSvmOvR);

        let seed = args.seed.or(file.seed);
        let mut train = file.train.unwrap_or_default();
        if let Some(seed) = seed {
            train.seed = seed;
        }
        let mut synthesis = file.synthesis;
        if let (Some(spec), Some(seed)) = (synthesis.as_mut(), seed) {
            spec.seed = seed;
        }

        Ok(Settings {
            corpus: args.corpus.clone().or(file.corpus),
            labels: args.labels.clone().or(file.labels),
            model: args.model.clone().or(file.model),
            out: args.out.clone().or(file.out),
            keywords: file.keywords,
            triggers: file.triggers,
            seed,
            k: args.k.or(file.k),
            model_kind,
            all_models: args.all_models || file.all_models.unwrap_or(false),
            featurizer,
            negation_window: args
                .negation_window
                .or(file.negation_window)
                .unwrap_or(DEFAULT_WINDOW),
            train,
            synthesis,
        })
    }

    fn require_corpus(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--corpus is required for this command".into()))
    }

    fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--out is required for this command".into()))
    }

    fn require_model(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--model is required for this command".into()))
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::InvalidConfig("--seed is required for randomized commands".into())
        })
    }

    fn keyword_lexicon(&self) -> Result<KeywordLexicon> {
        match &self.keywords {
            Some(path) => KeywordLexicon::from_file(path),
            None => Ok(KeywordLexicon::default()),
        }
    }

    fn trigger_lexicon(&self) -> Result<TriggerLexicon> {
        match &self.triggers {
            Some(path) => TriggerLexicon::from_file(path),
            None => Ok(TriggerLexicon::default()),
        }
    }

    /// Load the corpus, attaching sidecar labels when given.
    fn load_corpus(&self) -> Result<Corpus> {
        let mut corpus = ingest_notes(self.require_corpus()?)?;
        if let Some(labels) = &self.labels {
            let map = load_gold_labels(labels)?;
            apply_gold_labels(&mut corpus, &map)?;
        }
        Ok(corpus)
    }
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (args, result) = match &cli.command {
        Command::Synth(a) => (a, Settings::resolve(a).and_then(cmd_synth)),
        Command::Ingest(a) => (a, Settings::resolve(a).and_then(cmd_ingest)),
        Command::Rules(a) => (a, Settings::resolve(a).and_then(cmd_rules)),
        Command::Featurize(a) => (a, Settings::resolve(a).and_then(cmd_featurize)),
        Command::Train(a) => (a, Settings::resolve(a).and_then(cmd_train)),
        Command::Predict(a) => (a, Settings::resolve(a).and_then(cmd_predict)),
        Command::Cv(a) => (a, Settings::resolve(a).and_then(cmd_cv)),
        Command::TopFeatures(a) => (a, Settings::resolve(a).and_then(cmd_top_features)),
    };
    let _ = args;
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_synth(settings: Settings) -> Result<()> {
    let spec = settings.synthesis.clone().ok_or_else(|| {
        Error::InvalidConfig(
            "synth needs a config file with a \"synthesis\" section (see README)".into(),
        )
    })?;
    let out = settings.require_out()?;
    let corpus = generate_synthetic_corpus(&spec)?;
    atomic_write(&out.join("corpus.jsonl"), corpus.to_notes_jsonl().as_bytes())?;
    atomic_write(&out.join("labels.jsonl"), corpus.to_labels_jsonl().as_bytes())?;
    println!(
        "synthesized {} patients, {} notes (seed {}) -> {}",
        corpus.n_patients(),
        corpus.total_notes(),
        spec.seed,
        out.display()
    );
    let hist = corpus.fine_histogram();
    for fine in FineLabel::ALL {
        println!("  {:<8} {}", fine.to_string(), hist.get(&fine).copied().unwrap_or(0));
    }
    Ok(())
}

fn cmd_ingest(settings: Settings) -> Result<()> {
    let corpus = settings.load_corpus()?;
    let labeled = corpus.profiles.iter().filter(|p| p.gold_label.is_some()).count();
    println!(
        "ingested {} patients, {} notes ({} labeled)",
        corpus.n_patients(),
        corpus.total_notes(),
        labeled
    );
    if let Some(out) = &settings.out {
        atomic_write(out, corpus.to_profiles_jsonl().as_bytes())?;
        println!("wrote aggregated profiles -> {}", out.display());
    }
    Ok(())
}

fn cmd_rules(settings: Settings) -> Result<()> {
    let corpus = settings.load_corpus()?;
    let keywords = settings.keyword_lexicon()?;
    let triggers = settings.trigger_lexicon()?;

    let mut lines = String::new();
    let mut gold = Vec::new();
    let mut predicted = Vec::new();
    for profile in &corpus.profiles {
        let elements = extract_data_elements_with(
            profile,
            &keywords,
            Some(&triggers),
            settings.negation_window,
        );
        let trace = classify_rules(&elements);
        let record = serde_json::json!({
            "patient_id": profile.patient_id,
            "color": trace.predicted.coarse(),
            "fine": trace.predicted.fine(),
            "fired_rule": trace.fired_rule,
            "evidence": trace.elements.evidence,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
        if let Some(label) = profile.gold_label {
            gold.push(label.coarse());
            predicted.push(trace.predicted.coarse());
        }
    }
    match &settings.out {
        Some(out) => {
            atomic_write(out, lines.as_bytes())?;
            println!("classified {} patients -> {}", corpus.n_patients(), out.display());
        }
        None => print!("{lines}"),
    }
    if !gold.is_empty() {
        let report = compute_metrics(&confusion_counts(&gold, &predicted)?);
        print_metrics(&report);
    }
    Ok(())
}

fn cmd_featurize(settings: Settings) -> Result<()> {
    let corpus = settings.load_corpus()?;
    let out = settings.require_out()?;
    let vocabulary = build_vocabulary(&corpus, &settings.featurizer)?;
    atomic_write(&out.join("vocabulary.json"), vocabulary.to_json().as_bytes())?;
    let mut lines = String::new();
    for profile in &corpus.profiles {
        let vector = featurize(profile, &vocabulary, &settings.featurizer)?;
        let record = serde_json::json!({
            "patient_id": profile.patient_id,
            "counts": vector.counts,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    atomic_write(&out.join("features.jsonl"), lines.as_bytes())?;
    println!(
        "vocabulary of {} bigrams (df in [{}, {}]) -> {}",
        vocabulary.len(),
        settings.featurizer.min_df,
        settings.featurizer.max_df,
        out.display()
    );
    Ok(())
}

fn labeled_matrix(
    corpus: &Corpus,
    vocabulary: &Vocabulary,
    settings: &Settings,
) -> Result<(Vec<crate::features::FeatureVector>, Vec<crate::corpus::CoarseLabel>)> {
    let labels = corpus.gold_coarse_labels()?;
    let matrix = corpus
        .profiles
        .iter()
        .map(|p| featurize(p, vocabulary, &settings.featurizer))
        .collect::<Result<Vec<_>>>()?;
    Ok((matrix, labels))
}

fn cmd_train(settings: Settings) -> Result<()> {
    let corpus = settings.load_corpus()?;
    let out = settings.require_out()?;
    let vocabulary = build_vocabulary(&corpus, &settings.featurizer)?;
    let (matrix, labels) = labeled_matrix(&corpus, &vocabulary, &settings)?;
    let weights = match settings.train.class_weighting {
        ClassWeighting::Balanced => compute_class_weights(&labels)?,
        ClassWeighting::Uniform => ClassWeights::uniform(&labels),
    };
    let space = FeatureSpace::from(&vocabulary);
    let model = train_model(
        settings.model_kind,
        &space,
        &matrix,
        &labels,
        &weights,
        &settings.train,
    )?;
    atomic_write(&out.join("vocabulary.json"), vocabulary.to_json().as_bytes())?;
    save_model(&model, &out.join("model.json"))?;
    println!(
        "trained {} on {} patients over {} bigrams -> {}",
        model.kind,
        corpus.n_patients(),
        vocabulary.len(),
        out.display()
    );
    if model.convergence_warning {
        println!("warning: optimizer did not converge within the epoch budget");
    }
    Ok(())
}

fn sibling_vocabulary(model_path: &Path) -> Result<Vocabulary> {
    let dir = model_path.parent().unwrap_or_else(|| Path::new("."));
    let path = dir.join("vocabulary.json");
    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
    Vocabulary::from_json(&text)
}

fn cmd_predict(settings: Settings) -> Result<()> {
    let corpus = settings.load_corpus()?;
    let model_path = settings.require_model()?;
    let model = load_model(model_path)?;
    let vocabulary = sibling_vocabulary(model_path)?;
    let mut lines = String::new();
    for profile in &corpus.profiles {
        let vector = featurize(profile, &vocabulary, vocabulary.config())?;
        let (winner, scores) = predict(&model, &vector)?;
        let scores: BTreeMap<String, f64> =
            scores.into_iter().map(|(c, s)| (c.to_string(), s)).collect();
        let record = serde_json::json!({
            "patient_id": profile.patient_id,
            "predicted": winner,
            "scores": scores,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    match &settings.out {
        Some(out) => {
            atomic_write(out, lines.as_bytes())?;
            println!("predicted {} patients -> {}", corpus.n_patients(), out.display());
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn cmd_cv(settings: Settings) -> Result<()> {
    let corpus = settings.load_corpus()?;
    let seed = settings.require_seed()?;
    let k = settings.k.unwrap_or(10);
    let kinds: Vec<ModelKind> = if settings.all_models {
        ModelKind::ALL.to_vec()
    } else {
        vec![settings.model_kind]
    };

    let mut reports: BTreeMap<String, MetricsReport> = BTreeMap::new();
    for kind in &kinds {
        let report = cross_validate(
            &corpus,
            &settings.featurizer,
            &settings.train,
            *kind,
            k,
            seed,
        )?;
        reports.insert(kind.to_string(), report);
    }

    if kinds.len() == 1 {
        let report = &reports[&kinds[0].to_string()];
        println!("{k}-fold cross-validation, {} (seed {seed})", kinds[0]);
        print_metrics(report);
    } else {
        println!("{k}-fold cross-validation, all models (seed {seed})");
        println!("{:<8} {:>9} {:>9} {:>9} {:>9}", "model", "precision", "recall", "f1", "accuracy");
        for kind in &kinds {
            let r = &reports[&kind.to_string()];
            println!(
                "{:<8} {:>9} {:>9} {:>9} {:>9.3}",
                kind.to_string(),
                fmt_opt(r.weighted.precision),
                fmt_opt(r.weighted.recall),
                fmt_opt(r.weighted.f1),
                r.accuracy
            );
        }
    }

    if let Some(out) = &settings.out {
        let wrapper = serde_json::json!({
            "seed": seed,
            "k": k,
            "models": reports,
        });
        atomic_write(out, serde_json::to_string_pretty(&wrapper).unwrap().as_bytes())?;
        println!("wrote report -> {}", out.display());
    }
    Ok(())
}

fn cmd_top_features(settings: Settings) -> Result<()> {
    let model_path = settings.require_model()?;
    let model = load_model(model_path)?;
    let vocabulary = sibling_vocabulary(model_path)?;
    let ranked = top_features(&model, &vocabulary, settings.k.unwrap_or(5))?;
    for (class, bigrams) in &ranked {
        println!("[{class}]");
        for (bigram, weight) in bigrams {
            println!("  {:<32} {:+.4}", bigram.to_string(), weight);
        }
    }
    if let Some(out) = &settings.out {
        let as_json: BTreeMap<String, Vec<(String, f64)>> = ranked
            .into_iter()
            .map(|(c, bs)| {
                (
                    c.to_string(),
                    bs.into_iter().map(|(b, w)| (b.to_string(), w)).collect(),
                )
            })
            .collect();
        atomic_write(out, serde_json::to_string_pretty(&as_json).unwrap().as_bytes())?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => "n/a".into(),
    }
}

fn print_metrics(report: &MetricsReport) {
    println!(
        "{:<8} {:>9} {:>9} {:>9} {:>9}",
        "class", "precision", "recall", "f1", "support"
    );
    for (class, m) in &report.per_class {
        println!(
            "{:<8} {:>9} {:>9} {:>9} {:>9}",
            class.to_string(),
            fmt_opt(m.precision),
            fmt_opt(m.recall),
            fmt_opt(m.f1),
            m.support
        );
    }
    println!(
        "{:<8} {:>9} {:>9} {:>9}",
        "weighted",
        fmt_opt(report.weighted.precision),
        fmt_opt(report.weighted.recall),
        fmt_opt(report.weighted.f1)
    );
    println!("accuracy {:.3}", report.accuracy);
    if !report.folds.is_empty() {
        let accs: Vec<String> = report.folds.iter().map(|f| format!("{:.3}", f.accuracy)).collect();
        println!("folds    {}", accs.join(" "));
    }
}
