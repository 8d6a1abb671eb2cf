use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lexadu_core::analysis::{
    bow_report, cross_train, default_function_words, ensemble_predict, load_function_words, profile_curve,
    ExternalPredictions, TrainedModel, DEFAULT_FRACTIONS,
};
use lexadu_core::classifiers::{
    evaluate, read_prediction_dump, train_linear_select, write_prediction_dump, Prediction, Predictor, LAMBDA_GRID,
};
use lexadu_core::data::{load_dataset, split, undersample, DatasetFormat, LabeledDataset, SplitSet};
use lexadu_core::experiment::{run_manifest, ClassifierKind, ClassifierSpec, Preset, RunOptions};
use lexadu_core::intrinsic::{eval_space, grid_search, load_benchmark, BenchmarkFormat};
use lexadu_core::lexproject::{
    parse_association_table, parse_semantic_network, project_associations, project_network, NetworkFormat,
    ProjectedCorpus,
};
use lexadu_core::sgns::{default_grid, train_skipgram, SgnsConfig};
use lexadu_core::spaces::{load_space, save_space};
use lexadu_core::Error;

#[derive(Parser)]
#[command(
    name = "lexadu",
    version,
    about = "Semantic spaces from lexical resources, ADU classifiers and analyses"
)]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for reports and artifacts.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a semantic network or association table into a text corpus.
    Convert(ConvertArgs),
    /// Train a Skip-gram space, optionally searching the hyperparameter grid.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Spearman correlation of a space with a similarity benchmark.
    EvalSim(EvalSimArgs),
    /// Train and test a classifier on one dataset.
    Train(TrainArgs),
    /// Score a prediction dump.
    Evaluate(EvaluateArgs),
    /// Learning curve over growing training fractions.
    Profile(ProfileArgs),
    /// Train on each dataset and test on all of them.
    CrossTrain(CrossTrainArgs),
    /// Intersect the top n-gram features of linear models across datasets.
    Bow(BowArgs),
    /// Vote over prediction dumps and external predictions.
    Ensemble(EnsembleArgs),
    /// Execute an experiment manifest.
    Run(RunArgs),
}

#[derive(Args)]
struct ConvertArgs {
    /// Semantic network: a WordNet dict directory or an edge TSV.
    #[arg(long, conflicts_with = "associations", required_unless_present = "associations")]
    network: Option<PathBuf>,
    #[arg(long)]
    network_format: Option<NetworkFormat>,
    /// Association table in the SWOW CSV layout.
    #[arg(long)]
    associations: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainEmbeddingsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Search the full grid and keep the best space.
    #[arg(long, requires_all = ["similarity", "relatedness"])]
    grid: bool,
    #[arg(long)]
    similarity: Option<PathBuf>,
    #[arg(long, default_value = "simlex")]
    similarity_format: BenchmarkFormat,
    #[arg(long)]
    relatedness: Option<PathBuf>,
    #[arg(long, default_value = "wordsim")]
    relatedness_format: BenchmarkFormat,
    #[arg(long, default_value_t = 0.5)]
    min_coverage: f64,
}

#[derive(Args)]
struct EvalSimArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long, required = true)]
    benchmark: Vec<PathBuf>,
    #[arg(long, default_value = "tsv")]
    format: BenchmarkFormat,
}

#[derive(Args, Clone)]
struct DatasetArgs {
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long, default_value = "tsv")]
    format: DatasetFormat,
    /// Undersample the majority class before splitting.
    #[arg(long)]
    undersample: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Linear,
    Bilstm,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    UkpsWebis,
    Arauc,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "linear")]
    classifier: KindArg,
    /// Semantic space for the BiLSTM.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Update the embedding table during training.
    #[arg(long)]
    trainable: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout_keep: Option<f64>,
    #[arg(long)]
    lstm_units: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Where to save the trained model (JSON).
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Where to write test predictions (`id gold predicted score`).
    #[arg(long)]
    predictions_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
}

#[derive(Args)]
struct CrossTrainArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Also write the F1 matrix as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BowArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long)]
    function_words: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Prediction dumps from `train`; the first one supplies gold labels.
    #[arg(long = "predictions", required = true)]
    predictions: Vec<PathBuf>,
    /// External `id label score` files with a `# model=` line.
    #[arg(long = "external")]
    external: Vec<PathBuf>,
    /// One weight per member, dumps first; majority vote when omitted.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    manifest: PathBuf,
}

/// Exit status 1: bad input that was rejected before any work started.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<Invalid>().is_some()
                || matches!(
                    e.downcast_ref::<Error>(),
                    Some(Error::Validation(_) | Error::InvalidArgument(_))
                );
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}

fn emit(cli: &Cli, name: &str, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(dir) = &cli.output_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let p = dir.join(format!("{name}.json"));
        fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn out_path(cli: &Cli, explicit: &Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
    explicit
        .clone()
        .or_else(|| cli.output_dir.as_ref().map(|d| d.join(default_name)))
}

fn load_splits(args: &DatasetArgs, seed: u64) -> anyhow::Result<Vec<SplitSet>> {
    args.datasets
        .iter()
        .map(|p| {
            let d = load_dataset(p, args.format)?;
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let d = LabeledDataset::new(name, d.sentences);
            let d = if args.undersample { undersample(&d, seed)? } else { d };
            Ok(split(&d, seed)?)
        })
        .collect()
}

fn trainer(m: &ModelArgs) -> anyhow::Result<lexadu_core::analysis::TrainerSpec> {
    let spec = ClassifierSpec {
        name: "cli".into(),
        kind: match m.classifier {
            KindArg::Linear => ClassifierKind::Linear,
            KindArg::Bilstm => ClassifierKind::Bilstm,
        },
        preset: m.preset.map(|p| match p {
            PresetArg::UkpsWebis => Preset::UkpsWebis,
            PresetArg::Arauc => Preset::Arauc,
        }),
        epochs: m.epochs,
        batch_size: m.batch_size,
        seq_len: m.seq_len,
        lr: m.lr,
        dropout_keep: m.dropout_keep,
        lstm_units: m.lstm_units,
        trainable_embeddings: Some(m.trainable),
        lambdas: None,
    };
    let space = match (&m.space, m.classifier) {
        (Some(p), _) => Some(Arc::new(load_space(p)?)),
        (None, KindArg::Bilstm) => return Err(invalid("--space is required for --classifier bilstm")),
        (None, KindArg::Linear) => None,
    };
    let resolved = spec.resolve();
    if let lexadu_core::experiment::ResolvedClassifier::Bilstm { config } = &resolved {
        config.validate()?;
    }
    Ok(resolved.trainer(space)?)
}

fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Convert(a) => convert(cli, a)?,
        Command::TrainEmbeddings(a) => train_embeddings(cli, a)?,
        Command::EvalSim(a) => {
            let space = load_space(&a.space)?;
            let mut scores = serde_json::Map::new();
            for b in &a.benchmark {
                let bench = load_benchmark(b, a.format)?;
                scores.insert(bench.name.clone(), serde_json::to_value(eval_space(&space, &bench)?)?);
            }
            emit(cli, "eval-sim", &json!({ "space": a.space, "scores": scores }))?;
        }
        Command::Train(a) => train(cli, a)?,
        Command::Evaluate(a) => {
            let rows = read_prediction_dump(&a.predictions)?;
            let pred: Vec<_> = rows.iter().map(|r| r.prediction.label).collect();
            let gold: Vec<_> = rows.iter().map(|r| r.gold).collect();
            emit(cli, "evaluate", &serde_json::to_value(evaluate(&pred, &gold)?)?)?;
        }
        Command::Profile(a) => {
            let splits = single(load_splits(&a.data, cli.seed)?)?;
            let fractions = a.fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
            let points = profile_curve(&trainer(&a.model)?, &splits, &fractions, cli.seed)?;
            emit(
                cli,
                "profile",
                &json!({ "dataset": splits.name(), "seed": cli.seed, "points": points }),
            )?;
        }
        Command::CrossTrain(a) => {
            let sets = load_splits(&a.data, cli.seed)?;
            if sets.len() < 2 {
                return Err(invalid("cross-train needs at least two --dataset arguments"));
            }
            let m = cross_train(&sets, &trainer(&a.model)?, cli.seed)?;
            if let Some(p) = &a.csv {
                fs::write(p, m.to_csv("f1")?).with_context(|| format!("writing {}", p.display()))?;
            }
            emit(cli, "cross-train", &json!({ "seed": cli.seed, "matrix": m }))?;
        }
        Command::Bow(a) => {
            let sets = load_splits(&a.data, cli.seed)?;
            let words = match &a.function_words {
                Some(p) => load_function_words(p)?,
                None => default_function_words(),
            };
            let mut models = Vec::new();
            for s in &sets {
                let (m, _) =
                    train_linear_select(s, &LAMBDA_GRID, lexadu_core::analysis::DEFAULT_LINEAR_EPOCHS, cli.seed)?;
                models.push((s.name().to_string(), m));
            }
            emit(cli, "bow", &serde_json::to_value(bow_report(&models, a.k, &words)?)?)?;
        }
        Command::Ensemble(a) => ensemble(cli, a)?,
        Command::Run(a) => {
            let opts = RunOptions {
                output_dir: cli.output_dir.clone(),
                seed: (cli.seed != 0).then_some(cli.seed),
            };
            let outcome = run_manifest(&a.manifest, &opts)?;
            println!("{}", outcome.summary_path.display());
            for f in &outcome.summary.failures {
                eprintln!("failed: {f}");
            }
            if !outcome.succeeded() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn single(mut sets: Vec<SplitSet>) -> anyhow::Result<SplitSet> {
    if sets.len() != 1 {
        return Err(invalid("exactly one --dataset is expected"));
    }
    Ok(sets.remove(0))
}

fn convert(cli: &Cli, a: &ConvertArgs) -> anyhow::Result<()> {
    let corpus: ProjectedCorpus = match (&a.network, &a.associations) {
        (Some(n), _) => {
            let fmt = a.network_format.unwrap_or(if n.is_dir() {
                NetworkFormat::WordnetDb
            } else {
                NetworkFormat::EdgeTsv
            });
            project_network(&parse_semantic_network(n, fmt)?)
        }
        (None, Some(t)) => project_associations(&parse_association_table(t)?),
        (None, None) => bail!(invalid("one of --network or --associations is required")),
    };
    corpus.write(&a.out)?;
    emit(
        cli,
        "convert",
        &json!({ "out": a.out, "lines": corpus.lines.len(), "tokens": corpus.token_count() }),
    )
}

fn train_embeddings(cli: &Cli, a: &TrainEmbeddingsArgs) -> anyhow::Result<()> {
    let corpus = ProjectedCorpus::read(&a.corpus)?;
    let cfg = SgnsConfig {
        dim: a.dim,
        window: a.window,
        negatives: a.negatives,
        lr: a.lr,
        epochs: a.epochs,
        min_count: a.min_count,
        seed: cli.seed,
        workers: a.workers,
    };
    cfg.validate()?;
    let report = if a.grid {
        let sim = load_benchmark(a.similarity.as_ref().expect("required by clap"), a.similarity_format)?;
        let rel = load_benchmark(a.relatedness.as_ref().expect("required by clap"), a.relatedness_format)?;
        let res = grid_search(&corpus, &default_grid(&cfg), &sim, &rel, a.min_coverage)?;
        save_space(&res.best, &a.out)?;
        json!({ "out": a.out, "best_index": res.best_index, "grid": res.table })
    } else {
        let (space, stats) = train_skipgram(&corpus, &cfg)?;
        save_space(&space, &a.out)?;
        json!({ "out": a.out, "config": cfg, "config_hash": cfg.hash(), "stats": stats })
    };
    emit(cli, "train-embeddings", &report)
}

fn train(cli: &Cli, a: &TrainArgs) -> anyhow::Result<()> {
    let splits = single(load_splits(&a.data, cli.seed)?)?;
    let spec = trainer(&a.model)?;
    let (model, report) = spec.fit(&splits, cli.seed)?;
    if let Some(p) = out_path(cli, &a.model_out, "model.json") {
        save_model(&model, &p)?;
    }
    if let Some(p) = out_path(cli, &a.predictions_out, "predictions.tsv") {
        write_prediction_dump(&p, &splits.test, &model.predict(&splits.test))?;
    }
    emit(
        cli,
        "train",
        &json!({ "dataset": splits.name(), "classifier": spec.name(), "seed": cli.seed, "report": report }),
    )
}

fn save_model(model: &TrainedModel, path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    match model {
        TrainedModel::Linear(m) => {
            let text = serde_json::to_string(&json!({ "format_version": 1, "model": m }))?;
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        TrainedModel::BiLstm(m) => m.save(path)?,
    }
    Ok(())
}

fn ensemble(cli: &Cli, a: &EnsembleArgs) -> anyhow::Result<()> {
    let dumps: Vec<_> = a
        .predictions
        .iter()
        .map(|p| read_prediction_dump(p))
        .collect::<Result<_, _>>()?;
    let gold: Vec<(String, lexadu_core::data::Label)> = dumps[0].iter().map(|r| (r.id.clone(), r.gold)).collect();
    let mut members: Vec<Vec<Prediction>> = dumps
        .into_iter()
        .map(|d| d.into_iter().map(|r| r.prediction).collect())
        .collect();
    let mut names: Vec<String> = a.predictions.iter().map(|p| p.display().to_string()).collect();
    for p in &a.external {
        let ext = ExternalPredictions::load(p)?;
        names.push(ext.model.clone());
        members.push(ext.predictions);
    }
    let out = ensemble_predict(&members, a.weights.as_deref())?;
    let by_id: std::collections::HashMap<&str, lexadu_core::data::Label> =
        gold.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let pred: Vec<_> = out.iter().map(|p| p.label).collect();
    let gold_labels: Vec<_> = out.iter().map(|p| by_id[p.id.as_str()]).collect();
    let evaluation = evaluate(&pred, &gold_labels)?;
    if let Some(p) = &a.out {
        let ext = ExternalPredictions {
            model: "ensemble".into(),
            split: None,
            predictions: out.clone(),
        };
        ext.save(p)?;
    }
    emit(
        cli,
        "ensemble",
        &json!({ "members": names, "weights": a.weights, "evaluation": evaluation }),
    )
}
