//! Declarative experiment manifests and the runner that executes them.
//!
//! A manifest is a TOML document with `[[dataset]]`, `[[space]]`,
//! `[[classifier]]` and `[[experiment]]` tables plus an optional
//! `[analysis]` section. Every stage writes a JSON report whose file name
//! carries a hash of its resolved configuration and inputs; an existing
//! report with the same hash is reused on rerun.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    aggregate_runs, bow_report, cross_train, default_function_words, dev_f1_weights, ensemble_predict,
    load_function_words, profile_curve, BowReport, CrossTrainMatrix, CurvePoint, ExternalPredictions, TrainerSpec,
    DEFAULT_FRACTIONS, DEFAULT_LINEAR_EPOCHS,
};
use crate::classifiers::{
    evaluate, evaluate_predictions, read_prediction_dump, train_bilstm, train_linear_select, write_prediction_dump,
    ClassifierConfig, EvalReport, Evaluation, Prediction, Predictor, LAMBDA_GRID,
};
use crate::data::{load_dataset, oov_rate, split, undersample, ClassCounts, DatasetFormat, LabeledDataset, SplitSet};
use crate::error::{Error, Result};
use crate::intrinsic::{grid_search, load_benchmark, BenchmarkFormat, GridRow};
use crate::lexproject::{
    parse_association_table, parse_semantic_network, project_associations, project_network, NetworkFormat,
    ProjectedCorpus,
};
use crate::rng;
use crate::sgns::{default_grid, train_skipgram, SgnsConfig, TrainStats};
use crate::spaces::{load_space, random_space, save_space, SemanticSpace, DEFAULT_DIM};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_RUNS: usize = 10;
pub const DEFAULT_BOW_K: usize = 50;
pub const DEFAULT_MIN_COVERAGE: f64 = 0.5;

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Relative paths resolve against the manifest's directory.
    #[serde(default = "default_output", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default, rename = "dataset")]
    pub datasets: Vec<DatasetSpec>,
    #[serde(default, rename = "space")]
    pub spaces: Vec<SpaceSpec>,
    #[serde(default, rename = "classifier")]
    pub classifiers: Vec<ClassifierSpec>,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

fn default_format() -> DatasetFormat {
    DatasetFormat::Tsv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: DatasetFormat,
    #[serde(default)]
    pub undersample: bool,
    /// Seed for undersampling and splitting; defaults to the manifest seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Load,
    Random,
    Sgns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub name: String,
    pub kind: SpaceKind,
    /// `load`: a word2vec or GloVe text file.
    pub path: Option<PathBuf>,
    /// `random`: dimensionality, default 300.
    pub dim: Option<usize>,
    /// `random`: defaults to the manifest seed.
    pub seed: Option<u64>,
    /// `sgns`: exactly one of `corpus`, `network`, `associations`.
    pub corpus: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub network_format: Option<NetworkFormat>,
    pub associations: Option<PathBuf>,
    pub sgns: Option<SgnsConfig>,
    /// `sgns`: search the default grid around `sgns` instead of one run.
    pub grid: Option<GridSpec>,
}

fn default_simlex_format() -> BenchmarkFormat {
    BenchmarkFormat::Simlex
}

fn default_wordsim_format() -> BenchmarkFormat {
    BenchmarkFormat::Wordsim
}

fn default_min_coverage() -> f64 {
    DEFAULT_MIN_COVERAGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub similarity: PathBuf,
    #[serde(default = "default_simlex_format")]
    pub similarity_format: BenchmarkFormat,
    pub relatedness: PathBuf,
    #[serde(default = "default_wordsim_format")]
    pub relatedness_format: BenchmarkFormat,
    #[serde(default = "default_min_coverage")]
    pub min_coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Linear,
    Bilstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    UkpsWebis,
    Arauc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub name: String,
    pub kind: ClassifierKind,
    pub preset: Option<Preset>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seq_len: Option<usize>,
    pub lr: Option<f64>,
    pub dropout_keep: Option<f64>,
    pub lstm_units: Option<usize>,
    pub trainable_embeddings: Option<bool>,
    /// `linear`: regularization grid searched on the dev split.
    pub lambdas: Option<Vec<f64>>,
}

/// A classifier with every default filled in. `BiLstm` seeds are replaced
/// per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResolvedClassifier {
    Linear { lambdas: Vec<f64>, epochs: usize },
    Bilstm { config: ClassifierConfig },
}

impl ClassifierSpec {
    pub fn resolve(&self) -> ResolvedClassifier {
        match self.kind {
            ClassifierKind::Linear => ResolvedClassifier::Linear {
                lambdas: self.lambdas.clone().unwrap_or_else(|| LAMBDA_GRID.to_vec()),
                epochs: self.epochs.unwrap_or(DEFAULT_LINEAR_EPOCHS),
            },
            ClassifierKind::Bilstm => {
                let base = match self.preset.unwrap_or(Preset::UkpsWebis) {
                    Preset::UkpsWebis => ClassifierConfig::ukps_webis(),
                    Preset::Arauc => ClassifierConfig::arauc(),
                };
                ResolvedClassifier::Bilstm {
                    config: ClassifierConfig {
                        epochs: self.epochs.unwrap_or(base.epochs),
                        batch_size: self.batch_size.unwrap_or(base.batch_size),
                        seq_len: self.seq_len.unwrap_or(base.seq_len),
                        lr: self.lr.unwrap_or(base.lr),
                        dropout_keep: self.dropout_keep.unwrap_or(base.dropout_keep),
                        lstm_units: self.lstm_units.unwrap_or(base.lstm_units),
                        trainable_embeddings: self.trainable_embeddings.unwrap_or(base.trainable_embeddings),
                        ..base
                    },
                }
            }
        }
    }
}

impl ResolvedClassifier {
    pub fn trainer(&self, space: Option<Arc<SemanticSpace>>) -> Result<TrainerSpec> {
        Ok(match self {
            ResolvedClassifier::Linear { lambdas, epochs } => TrainerSpec::Linear {
                lambdas: lambdas.clone(),
                epochs: *epochs,
            },
            ResolvedClassifier::Bilstm { config } => TrainerSpec::BiLstm {
                space: space.ok_or_else(|| Error::InvalidArgument("bilstm needs a space".into()))?,
                config: config.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: String,
    pub space: String,
    pub classifier: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub profile: Vec<ProfileSpec>,
    #[serde(default)]
    pub cross_train: Vec<CrossTrainSpec>,
    #[serde(default)]
    pub bow: Vec<BowSpec>,
    #[serde(default)]
    pub ensemble: Vec<EnsembleSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub experiment: String,
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossTrainSpec {
    pub name: String,
    pub datasets: Vec<String>,
    pub classifier: String,
    pub space: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BowSpec {
    pub name: String,
    pub datasets: Vec<String>,
    pub k: Option<usize>,
    pub function_words: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Majority,
    DevF1,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalMember {
    pub path: PathBuf,
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub name: String,
    #[serde(default)]
    pub experiments: Vec<String>,
    #[serde(default)]
    pub external: Vec<ExternalMember>,
    pub weighting: Weighting,
    /// Required for `fixed`: experiments first, then external members.
    pub weights: Option<Vec<f64>>,
}

fn toml_line(text: &str, e: &toml::de::Error) -> usize {
    e.span()
        .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

impl Manifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(origin, toml_line(text, &e), e.message().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Checks references, paths and parameter ranges, reporting every
    /// problem at once. Paths resolve against `base`.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let mut p = Vec::new();
        let exists = |path: &Path| base.join(path).exists();
        if self.runs == 0 {
            p.push("runs: must be at least 1".to_string());
        }
        let dup = |kind: &str, names: Vec<&str>, p: &mut Vec<String>| {
            let mut seen = HashSet::new();
            for n in names {
                if n.is_empty() {
                    p.push(format!("{kind}: empty name"));
                } else if !seen.insert(n) {
                    p.push(format!("{kind} {n:?}: duplicate name"));
                }
            }
        };
        dup(
            "dataset",
            self.datasets.iter().map(|d| d.name.as_str()).collect(),
            &mut p,
        );
        dup("space", self.spaces.iter().map(|d| d.name.as_str()).collect(), &mut p);
        dup(
            "classifier",
            self.classifiers.iter().map(|d| d.name.as_str()).collect(),
            &mut p,
        );
        dup(
            "experiment",
            self.experiments.iter().map(|d| d.name.as_str()).collect(),
            &mut p,
        );
        let mut analysis_names: Vec<&str> = Vec::new();
        analysis_names.extend(self.analysis.cross_train.iter().map(|a| a.name.as_str()));
        analysis_names.extend(self.analysis.bow.iter().map(|a| a.name.as_str()));
        analysis_names.extend(self.analysis.ensemble.iter().map(|a| a.name.as_str()));
        dup("analysis", analysis_names, &mut p);

        for d in &self.datasets {
            if !exists(&d.path) {
                p.push(format!("dataset {:?}.path: not found: {}", d.name, d.path.display()));
            }
        }
        for s in &self.spaces {
            let field = |f: &str| format!("space {:?}.{f}", s.name);
            let need = |f: &str, v: &Option<PathBuf>, p: &mut Vec<String>| match v {
                None => p.push(format!("{}: required for kind {:?}", field(f), s.kind)),
                Some(path) if !exists(path) => p.push(format!("{}: not found: {}", field(f), path.display())),
                Some(_) => {}
            };
            match s.kind {
                SpaceKind::Load => need("path", &s.path, &mut p),
                SpaceKind::Random => {
                    if s.dim == Some(0) {
                        p.push(format!("{}: must be at least 1", field("dim")));
                    }
                }
                SpaceKind::Sgns => {
                    let sources = [
                        ("corpus", &s.corpus),
                        ("network", &s.network),
                        ("associations", &s.associations),
                    ];
                    let given: Vec<_> = sources.iter().filter(|(_, v)| v.is_some()).collect();
                    if given.len() != 1 {
                        p.push(format!(
                            "space {:?}: exactly one of corpus, network, associations is required",
                            s.name
                        ));
                    }
                    for (f, v) in given {
                        need(f, v, &mut p);
                    }
                    if let Err(Error::Validation(v)) = s.sgns.clone().unwrap_or_default().validate() {
                        p.extend(v.into_iter().map(|m| format!("{}: {m}", field("sgns"))));
                    } else if let Err(e) = s.sgns.clone().unwrap_or_default().validate() {
                        p.push(format!("{}: {e}", field("sgns")));
                    }
                    if let Some(g) = &s.grid {
                        need("grid.similarity", &Some(g.similarity.clone()), &mut p);
                        need("grid.relatedness", &Some(g.relatedness.clone()), &mut p);
                        if !(0.0..=1.0).contains(&g.min_coverage) {
                            p.push(format!("{}: must be in [0, 1]", field("grid.min_coverage")));
                        }
                    }
                }
            }
        }
        for c in &self.classifiers {
            match c.resolve() {
                ResolvedClassifier::Linear { lambdas, epochs } => {
                    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                        p.push(format!(
                            "classifier {:?}.lambdas: must be non-empty and positive",
                            c.name
                        ));
                    }
                    if epochs == 0 {
                        p.push(format!("classifier {:?}.epochs: must be at least 1", c.name));
                    }
                }
                ResolvedClassifier::Bilstm { config } => {
                    if let Err(Error::Validation(v)) = config.validate() {
                        p.extend(v.into_iter().map(|m| format!("classifier {:?}: {m}", c.name)));
                    }
                }
            }
        }
        let datasets: HashSet<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        let spaces: HashSet<&str> = self.spaces.iter().map(|d| d.name.as_str()).collect();
        let classifiers: HashMap<&str, &ClassifierSpec> =
            self.classifiers.iter().map(|c| (c.name.as_str(), c)).collect();
        let experiments: HashMap<&str, &ExperimentSpec> =
            self.experiments.iter().map(|e| (e.name.as_str(), e)).collect();
        let refer = |what: &str, set: &dyn Fn(&str) -> bool, name: &str, field: String, p: &mut Vec<String>| {
            if !set(name) {
                p.push(format!("{field}: unknown {what} {name:?}"));
            }
        };
        for e in &self.experiments {
            let f = |x: &str| format!("experiment {:?}.{x}", e.name);
            refer("dataset", &|n| datasets.contains(n), &e.dataset, f("dataset"), &mut p);
            refer("space", &|n| spaces.contains(n), &e.space, f("space"), &mut p);
            refer(
                "classifier",
                &|n| classifiers.contains_key(n),
                &e.classifier,
                f("classifier"),
                &mut p,
            );
        }
        for a in &self.analysis.profile {
            refer(
                "experiment",
                &|n| experiments.contains_key(n),
                &a.experiment,
                "analysis.profile.experiment".into(),
                &mut p,
            );
            let fr = a.fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
            let ok = !fr.is_empty()
                && fr.iter().all(|&f| f > 0.0 && f <= 1.0)
                && fr.windows(2).all(|w| w[0] < w[1])
                && fr.last() == Some(&1.0);
            if !ok {
                p.push(format!(
                    "analysis.profile {:?}.fractions: must ascend within (0, 1] and end with 1.0",
                    a.experiment
                ));
            }
        }
        for a in &self.analysis.cross_train {
            let f = |x: &str| format!("analysis.cross_train {:?}.{x}", a.name);
            if a.datasets.len() < 2 {
                p.push(format!("{}: at least two datasets are required", f("datasets")));
            }
            for d in &a.datasets {
                refer("dataset", &|n| datasets.contains(n), d, f("datasets"), &mut p);
            }
            refer(
                "classifier",
                &|n| classifiers.contains_key(n),
                &a.classifier,
                f("classifier"),
                &mut p,
            );
            let is_bilstm = classifiers
                .get(a.classifier.as_str())
                .is_some_and(|c| c.kind == ClassifierKind::Bilstm);
            match &a.space {
                Some(s) => refer("space", &|n| spaces.contains(n), s, f("space"), &mut p),
                None if is_bilstm => p.push(format!("{}: required for a bilstm classifier", f("space"))),
                None => {}
            }
        }
        for a in &self.analysis.bow {
            let f = |x: &str| format!("analysis.bow {:?}.{x}", a.name);
            if a.datasets.is_empty() {
                p.push(format!("{}: at least one dataset is required", f("datasets")));
            }
            for d in &a.datasets {
                refer("dataset", &|n| datasets.contains(n), d, f("datasets"), &mut p);
            }
            if let Some(path) = &a.function_words {
                if !exists(path) {
                    p.push(format!("{}: not found: {}", f("function_words"), path.display()));
                }
            }
        }
        for a in &self.analysis.ensemble {
            let f = |x: &str| format!("analysis.ensemble {:?}.{x}", a.name);
            let members = a.experiments.len() + a.external.len();
            if members == 0 {
                p.push(format!("{}: no members", f("experiments")));
            }
            for e in &a.experiments {
                refer(
                    "experiment",
                    &|n| experiments.contains_key(n),
                    e,
                    f("experiments"),
                    &mut p,
                );
            }
            let member_datasets: BTreeSet<&str> = a
                .experiments
                .iter()
                .filter_map(|e| experiments.get(e.as_str()).map(|x| x.dataset.as_str()))
                .collect();
            if member_datasets.len() > 1 {
                p.push(format!(
                    "{}: members use different datasets {member_datasets:?}",
                    f("experiments")
                ));
            }
            if a.experiments.is_empty() && !a.external.is_empty() {
                p.push(format!(
                    "{}: external members need at least one experiment to name the dataset",
                    f("external")
                ));
            }
            for x in &a.external {
                if !exists(&x.path) {
                    p.push(format!("{}: not found: {}", f("external.path"), x.path.display()));
                }
                if a.weighting == Weighting::DevF1 && x.dev_f1.is_none() {
                    p.push(format!("{}: dev_f1 is required with dev_f1 weighting", f("external")));
                }
            }
            match (&a.weighting, &a.weights) {
                (Weighting::Fixed, None) => p.push(format!("{}: required for fixed weighting", f("weights"))),
                (Weighting::Fixed, Some(w)) => {
                    if w.len() != members {
                        p.push(format!(
                            "{}: expected {members} weights, found {}",
                            f("weights"),
                            w.len()
                        ));
                    }
                    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().all(|&x| x == 0.0) {
                        p.push(format!("{}: must be non-negative and not all zero", f("weights")));
                    }
                }
                (_, Some(_)) => p.push(format!("{}: only allowed with fixed weighting", f("weights"))),
                _ => {}
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

fn hash_of<T: Serialize>(v: &T) -> String {
    short_hash(serde_json::to_string(v).expect("serializable").as_bytes())
}

/// Content hash of a file, or of every file directly inside a directory.
pub fn hash_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            h.update(
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            );
            h.update([0]);
            h.update(fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
    } else {
        h.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    }
    Ok(hex::encode(&h.finalize()[..8]))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Option<T> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Reuses the report at `path` if it parses, otherwise computes and writes it.
fn cached<T: Serialize + DeserializeOwned>(path: &Path, compute: impl FnOnce() -> Result<T>) -> Result<T> {
    if let Some(v) = read_json(path) {
        return Ok(v);
    }
    let v = compute()?;
    write_json(path, &v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: ClassCounts,
    pub dev: ClassCounts,
    pub test: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub schema_version: u32,
    pub config: DatasetSpec,
    pub seed: u64,
    pub content_hash: String,
    pub loaded: ClassCounts,
    pub used: ClassCounts,
    pub splits: SplitSizes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub schema_version: u32,
    pub config: SpaceSpec,
    pub seed: Option<u64>,
    pub config_hash: String,
    /// Generated spaces are stored here, relative to the output directory.
    pub file: Option<PathBuf>,
    pub words: usize,
    pub dim: usize,
    pub checksum: String,
    pub corpus_tokens: Option<usize>,
    pub training: Option<TrainStats>,
    pub grid: Option<Vec<GridRow>>,
    pub grid_best: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub dev_f1: f64,
    pub report: EvalReport,
    /// BiLSTM: epoch kept by dev F1. Linear: index of the selected lambda.
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub dataset: String,
    pub space: String,
    pub space_checksum: String,
    pub classifier: ResolvedClassifier,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub f1_values: Vec<f64>,
    pub aggregate: EvalReport,
    /// Test predictions of run 0, relative to the output directory.
    pub predictions: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub schema_version: u32,
    pub experiment: String,
    pub fractions: Vec<f64>,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTrainReport {
    pub schema_version: u32,
    pub name: String,
    pub classifier: ResolvedClassifier,
    pub space: Option<String>,
    pub seed: u64,
    pub matrix: CrossTrainMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowStageReport {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub lambdas: BTreeMap<String, f64>,
    pub report: BowReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub schema_version: u32,
    pub name: String,
    pub dataset: String,
    pub members: Vec<String>,
    pub weighting: Weighting,
    pub weights: Option<Vec<f64>>,
    pub member_f1: Vec<f64>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResults {
    pub profile: Vec<ProfileReport>,
    pub cross_train: Vec<CrossTrainReport>,
    pub bow: Vec<BowStageReport>,
    pub ensemble: Vec<EnsembleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub manifest_hash: String,
    pub manifest: Manifest,
    pub datasets: Vec<DatasetReport>,
    pub spaces: Vec<SpaceReport>,
    pub experiments: Vec<ExperimentReport>,
    pub analysis: AnalysisResults,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub summary_path: PathBuf,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.summary.failures.is_empty()
    }
}

struct Runner<'a> {
    m: &'a Manifest,
    base: PathBuf,
    out: PathBuf,
    datasets: BTreeMap<String, (SplitSet, DatasetReport)>,
    spaces: BTreeMap<String, Arc<SemanticSpace>>,
    experiments: BTreeMap<String, (ExperimentReport, Vec<Prediction>)>,
    failures: Vec<String>,
}

/// Seed of run `r` under manifest seed `seed`.
pub fn run_seed(seed: u64, r: usize) -> u64 {
    rng::derive_seed(seed, r as u64)
}

impl Runner<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn prepare_dataset(&self, d: &DatasetSpec) -> Result<(SplitSet, DatasetReport)> {
        let path = self.path(&d.path);
        let seed = d.seed.unwrap_or(self.m.seed);
        let raw = load_dataset(&path, d.format)?;
        let raw = LabeledDataset::new(d.name.clone(), raw.sentences);
        let used = if d.undersample {
            undersample(&raw, seed)?
        } else {
            raw.clone()
        };
        let splits = split(&used, seed)?;
        let report = DatasetReport {
            schema_version: SCHEMA_VERSION,
            config: d.clone(),
            seed,
            content_hash: hash_path(&path)?,
            loaded: raw.class_counts(),
            used: used.class_counts(),
            splits: SplitSizes {
                train: splits.train.class_counts(),
                dev: splits.dev.class_counts(),
                test: splits.test.class_counts(),
            },
        };
        write_json(
            &self
                .out
                .join("datasets")
                .join(format!("{}-{}.json", d.name, hash_of(&report))),
            &report,
        )?;
        Ok((splits, report))
    }

    fn corpus_for(&self, s: &SpaceSpec) -> Result<(ProjectedCorpus, String)> {
        if let Some(c) = &s.corpus {
            let p = self.path(c);
            return Ok((ProjectedCorpus::read(&p)?, hash_path(&p)?));
        }
        if let Some(n) = &s.network {
            let p = self.path(n);
            let fmt = s.network_format.unwrap_or(if p.is_dir() {
                NetworkFormat::WordnetDb
            } else {
                NetworkFormat::EdgeTsv
            });
            let hash = hash_path(&p)?;
            return Ok((project_network(&parse_semantic_network(&p, fmt)?), hash));
        }
        let p = self.path(s.associations.as_ref().expect("validated source"));
        let hash = hash_path(&p)?;
        Ok((project_associations(&parse_association_table(&p)?), hash))
    }

    fn space_vocab(&self) -> BTreeSet<String> {
        self.datasets
            .values()
            .flat_map(|(s, _)| [&s.train, &s.dev, &s.test])
            .flat_map(|d| d.sentences.iter().flat_map(|s| s.tokens.iter().cloned()))
            .collect()
    }

    fn prepare_space(&self, s: &SpaceSpec) -> Result<(Arc<SemanticSpace>, SpaceReport)> {
        let make_report = |space: &SemanticSpace, seed, hash: String, file| SpaceReport {
            schema_version: SCHEMA_VERSION,
            config: s.clone(),
            seed,
            config_hash: hash,
            file,
            words: space.len(),
            dim: space.dim(),
            checksum: space.checksum(),
            corpus_tokens: None,
            training: None,
            grid: None,
            grid_best: None,
        };
        let report_path = |hash: &str| self.out.join("spaces").join(format!("{}-{hash}.json", s.name));
        let (space, report) = match s.kind {
            SpaceKind::Load => {
                let p = self.path(s.path.as_ref().expect("validated"));
                let space = load_space(&p)?;
                let hash = hash_path(&p)?;
                let r = make_report(&space, None, hash, None);
                (space, r)
            }
            SpaceKind::Random => {
                let vocab = self.space_vocab();
                let dim = s.dim.unwrap_or(DEFAULT_DIM);
                let seed = s.seed.unwrap_or(self.m.seed);
                let hash = hash_of(&(&vocab, dim, seed, s));
                let file = PathBuf::from("spaces").join(format!("{}-{hash}.txt", s.name));
                let space = self.generated(&file, || random_space(&vocab, dim, seed))?;
                let r = cached(&report_path(&hash), || {
                    Ok(make_report(&space, Some(seed), hash.clone(), Some(file)))
                })?;
                (space, r)
            }
            SpaceKind::Sgns => {
                let (corpus, corpus_hash) = self.corpus_for(s)?;
                let cfg = s.sgns.clone().unwrap_or_default();
                let bench_hashes = match &s.grid {
                    Some(g) => Some((
                        hash_path(&self.path(&g.similarity))?,
                        hash_path(&self.path(&g.relatedness))?,
                    )),
                    None => None,
                };
                let hash = hash_of(&(&corpus_hash, s, &bench_hashes));
                let corpus_file = self.out.join("corpora").join(format!("{}-{corpus_hash}.txt", s.name));
                if !corpus_file.exists() {
                    fs::create_dir_all(corpus_file.parent().expect("has parent"))
                        .map_err(|e| Error::io(&corpus_file, e))?;
                    corpus.write(&corpus_file)?;
                }
                let file = PathBuf::from("spaces").join(format!("{}-{hash}.txt", s.name));
                let rp = report_path(&hash);
                if let (Some(r), true) = (read_json::<SpaceReport>(&rp), self.out.join(&file).exists()) {
                    let space = load_space(&self.out.join(&file))?;
                    (space, r)
                } else {
                    let mut training = None;
                    let mut grid = None;
                    let mut grid_best = None;
                    let space = self.generated(&file, || match &s.grid {
                        None => {
                            let (space, stats) = train_skipgram(&corpus, &cfg)?;
                            training = Some(stats);
                            Ok(space)
                        }
                        Some(g) => {
                            let sim = load_benchmark(&self.path(&g.similarity), g.similarity_format)?;
                            let rel = load_benchmark(&self.path(&g.relatedness), g.relatedness_format)?;
                            let res = grid_search(&corpus, &default_grid(&cfg), &sim, &rel, g.min_coverage)?;
                            grid = Some(res.table);
                            grid_best = Some(res.best_index);
                            Ok(res.best)
                        }
                    })?;
                    let mut r = make_report(&space, Some(cfg.seed), hash, Some(file));
                    r.corpus_tokens = Some(corpus.token_count());
                    r.training = training;
                    r.grid = grid;
                    r.grid_best = grid_best;
                    write_json(&rp, &r)?;
                    (space, r)
                }
            }
        };
        if s.kind == SpaceKind::Load {
            write_json(&report_path(&report.config_hash), &report)?;
        }
        Ok((Arc::new(space), report))
    }

    /// Loads `file` if it exists; otherwise builds, saves and reloads it so
    /// every run sees the stored precision.
    fn generated(&self, file: &Path, build: impl FnOnce() -> Result<SemanticSpace>) -> Result<SemanticSpace> {
        let full = self.out.join(file);
        if !full.exists() {
            fs::create_dir_all(full.parent().expect("has parent")).map_err(|e| Error::io(&full, e))?;
            save_space(&build()?, &full)?;
        }
        load_space(&full)
    }

    fn run_experiment(&self, e: &ExperimentSpec) -> Result<(ExperimentReport, Vec<Prediction>)> {
        let (splits, dreport) = self
            .datasets
            .get(&e.dataset)
            .ok_or_else(|| Error::InvalidArgument(format!("dataset {:?} unavailable", e.dataset)))?;
        let space = self
            .spaces
            .get(&e.space)
            .ok_or_else(|| Error::InvalidArgument(format!("space {:?} unavailable", e.space)))?
            .clone();
        let classifier = self
            .m
            .classifiers
            .iter()
            .find(|c| c.name == e.classifier)
            .expect("validated")
            .resolve();
        let seeds: Vec<u64> = (0..self.m.runs).map(|r| run_seed(self.m.seed, r)).collect();
        let checksum = space.checksum();
        let hash = hash_of(&(e, &dreport, &checksum, &classifier, &seeds));
        let report_path = self.out.join("experiments").join(format!("{}-{hash}.json", e.name));
        let pred_file = PathBuf::from("predictions").join(format!("{}-{hash}.tsv", e.name));
        if let Some(r) = read_json::<ExperimentReport>(&report_path) {
            if let Ok(rows) = read_prediction_dump(&self.out.join(&pred_file)) {
                return Ok((r, rows.into_iter().map(|r| r.prediction).collect()));
            }
        }

        let outcomes: Vec<Result<(RunRecord, Vec<Prediction>)>> = seeds
            .par_iter()
            .enumerate()
            .map(|(run, &seed)| {
                let (dev_pred, test_pred, report, selected) = match &classifier {
                    ResolvedClassifier::Linear { lambdas, epochs } => {
                        let (m, scores) = train_linear_select(splits, lambdas, *epochs, seed)?;
                        let selected = scores.iter().position(|s| s.lambda == m.lambda).unwrap_or(0);
                        let test_pred = m.predict(&splits.test);
                        let metrics = evaluate_predictions(&test_pred, &splits.test)?.metrics;
                        let report = EvalReport::single(metrics, Some(oov_rate(&splits.test, space.as_ref())), None);
                        (m.predict(&splits.dev), test_pred, report, selected)
                    }
                    ResolvedClassifier::Bilstm { config } => {
                        let cfg = ClassifierConfig { seed, ..config.clone() };
                        let (m, report) = train_bilstm(splits, space.clone(), &cfg)?;
                        (m.predict(&splits.dev), m.predict(&splits.test), report, m.best_epoch)
                    }
                };
                let dev_f1 = evaluate_predictions(&dev_pred, &splits.dev)?.metrics.f1;
                Ok((
                    RunRecord {
                        run,
                        seed,
                        dev_f1,
                        report,
                        selected,
                    },
                    test_pred,
                ))
            })
            .collect();
        let mut runs = Vec::with_capacity(outcomes.len());
        let mut first_pred = None;
        for o in outcomes {
            let (rec, pred) = o?;
            if first_pred.is_none() {
                first_pred = Some(pred);
            }
            runs.push(rec);
        }
        let first_pred = first_pred.expect("runs >= 1");
        let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
        let report = ExperimentReport {
            schema_version: SCHEMA_VERSION,
            name: e.name.clone(),
            dataset: e.dataset.clone(),
            space: e.space.clone(),
            space_checksum: checksum,
            classifier,
            seeds,
            f1_values: runs.iter().map(|r| r.report.mean.f1).collect(),
            runs,
            aggregate: aggregate_runs(&reports)?,
            predictions: pred_file.clone(),
        };
        let pred_path = self.out.join(&pred_file);
        fs::create_dir_all(pred_path.parent().expect("has parent")).map_err(|e| Error::io(&pred_path, e))?;
        write_prediction_dump(&pred_path, &splits.test, &first_pred)?;
        write_json(&report_path, &report)?;
        Ok((report, first_pred))
    }

    fn splits_of(&self, name: &str) -> Result<&(SplitSet, DatasetReport)> {
        self.datasets
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("dataset {name:?} unavailable")))
    }

    fn profile(&self, a: &ProfileSpec) -> Result<ProfileReport> {
        let e = self
            .m
            .experiments
            .iter()
            .find(|e| e.name == a.experiment)
            .expect("validated");
        let (splits, dreport) = self.splits_of(&e.dataset)?;
        let space = self.spaces.get(&e.space).cloned();
        let classifier = self
            .m
            .classifiers
            .iter()
            .find(|c| c.name == e.classifier)
            .expect("validated")
            .resolve();
        let fractions = a.fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
        let checksum = space.as_ref().map(|s| s.checksum());
        let hash = hash_of(&(a, dreport, &checksum, &classifier, self.m.seed));
        let path = self
            .out
            .join("analysis")
            .join(format!("profile-{}-{hash}.json", a.experiment));
        cached(&path, || {
            let trainer = classifier.trainer(space)?;
            Ok(ProfileReport {
                schema_version: SCHEMA_VERSION,
                experiment: a.experiment.clone(),
                points: profile_curve(&trainer, splits, &fractions, self.m.seed)?,
                fractions,
                seed: self.m.seed,
            })
        })
    }

    fn cross(&self, a: &CrossTrainSpec) -> Result<CrossTrainReport> {
        let sets: Vec<&(SplitSet, DatasetReport)> =
            a.datasets.iter().map(|d| self.splits_of(d)).collect::<Result<_>>()?;
        let classifier = self
            .m
            .classifiers
            .iter()
            .find(|c| c.name == a.classifier)
            .expect("validated")
            .resolve();
        let space = match &a.space {
            Some(s) => Some(
                self.spaces
                    .get(s)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("space {s:?} unavailable")))?,
            ),
            None => None,
        };
        let checksum = space.as_ref().map(|s| s.checksum());
        let dreports: Vec<&DatasetReport> = sets.iter().map(|s| &s.1).collect();
        let hash = hash_of(&(a, &dreports, &checksum, &classifier, self.m.seed));
        let path = self
            .out
            .join("analysis")
            .join(format!("cross-train-{}-{hash}.json", a.name));
        let report = cached(&path, || {
            let trainer = classifier.trainer(space)?;
            let splits: Vec<SplitSet> = sets.iter().map(|s| s.0.clone()).collect();
            Ok(CrossTrainReport {
                schema_version: SCHEMA_VERSION,
                name: a.name.clone(),
                classifier: classifier.clone(),
                space: a.space.clone(),
                seed: self.m.seed,
                matrix: cross_train(&splits, &trainer, self.m.seed)?,
            })
        })?;
        let csv = path.with_extension("f1.csv");
        fs::write(&csv, report.matrix.to_csv("f1")?).map_err(|e| Error::io(&csv, e))?;
        Ok(report)
    }

    fn bow(&self, a: &BowSpec) -> Result<BowStageReport> {
        let sets: Vec<&(SplitSet, DatasetReport)> =
            a.datasets.iter().map(|d| self.splits_of(d)).collect::<Result<_>>()?;
        let words = match &a.function_words {
            Some(p) => load_function_words(&self.path(p))?,
            None => default_function_words(),
        };
        let k = a.k.unwrap_or(DEFAULT_BOW_K);
        let dreports: Vec<&DatasetReport> = sets.iter().map(|s| &s.1).collect();
        let hash = hash_of(&(a, &dreports, &words, self.m.seed));
        let path = self.out.join("analysis").join(format!("bow-{}-{hash}.json", a.name));
        cached(&path, || {
            let mut models = Vec::new();
            let mut lambdas = BTreeMap::new();
            for (splits, _) in &sets {
                let (m, _) = train_linear_select(splits, &LAMBDA_GRID, DEFAULT_LINEAR_EPOCHS, self.m.seed)?;
                lambdas.insert(splits.name().to_string(), m.lambda);
                models.push((splits.name().to_string(), m));
            }
            Ok(BowStageReport {
                schema_version: SCHEMA_VERSION,
                name: a.name.clone(),
                seed: self.m.seed,
                lambdas,
                report: bow_report(&models, k, &words)?,
            })
        })
    }

    fn ensemble(&self, a: &EnsembleSpec) -> Result<EnsembleReport> {
        let mut names = Vec::new();
        let mut members = Vec::new();
        let mut dev_f1 = Vec::new();
        let mut dataset = None;
        for e in &a.experiments {
            let (r, pred) = self
                .experiments
                .get(e)
                .ok_or_else(|| Error::InvalidArgument(format!("experiment {e:?} unavailable")))?;
            dataset = Some(r.dataset.clone());
            names.push(e.clone());
            members.push(pred.clone());
            dev_f1.push(r.runs[0].dev_f1);
        }
        let dataset = dataset.ok_or_else(|| Error::InvalidArgument("ensemble has no experiment member".into()))?;
        let (splits, _) = self.splits_of(&dataset)?;
        for x in &a.external {
            let ext = ExternalPredictions::load(&self.path(&x.path))?;
            members.push(ext.align(&splits.test)?);
            names.push(ext.model.clone());
            dev_f1.push(x.dev_f1.unwrap_or(0.0));
        }
        let weights = match a.weighting {
            Weighting::Majority => None,
            Weighting::DevF1 => Some(dev_f1_weights(&dev_f1)?),
            Weighting::Fixed => a.weights.clone(),
        };
        let out = ensemble_predict(&members, weights.as_deref())?;
        let gold = splits.test.labels();
        let member_f1 = members
            .iter()
            .map(|m| {
                Ok(evaluate(&m.iter().map(|p| p.label).collect::<Vec<_>>(), &gold)?
                    .metrics
                    .f1)
            })
            .collect::<Result<Vec<f64>>>()?;
        let report = EnsembleReport {
            schema_version: SCHEMA_VERSION,
            name: a.name.clone(),
            dataset,
            members: names,
            weighting: a.weighting,
            weights,
            member_f1,
            evaluation: evaluate_predictions(&out, &splits.test)?,
        };
        let hash = hash_of(&report);
        write_json(
            &self
                .out
                .join("analysis")
                .join(format!("ensemble-{}-{hash}.json", a.name)),
            &report,
        )?;
        Ok(report)
    }
}

/// Validates and executes a manifest. Validation problems are returned as
/// [`Error::Validation`]; failures of individual stages are recorded in the
/// summary and leave every completed stage report on disk.
pub fn run_manifest(path: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let mut m = Manifest::from_path(path)?;
    if let Some(seed) = opts.seed {
        m.seed = seed;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate(&base)?;
    let out = match &opts.output_dir {
        Some(o) => o.clone(),
        None => base.join(&m.output_dir),
    };
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let mut r = Runner {
        m: &m,
        base,
        out: out.clone(),
        datasets: BTreeMap::new(),
        spaces: BTreeMap::new(),
        experiments: BTreeMap::new(),
        failures: Vec::new(),
    };
    let mut dataset_reports = Vec::new();
    for d in &m.datasets {
        match r.prepare_dataset(d) {
            Ok((s, rep)) => {
                dataset_reports.push(rep.clone());
                r.datasets.insert(d.name.clone(), (s, rep));
            }
            Err(e) => r.failures.push(format!("dataset {:?}: {e}", d.name)),
        }
    }
    let mut space_reports = Vec::new();
    for s in &m.spaces {
        match r.prepare_space(s) {
            Ok((space, rep)) => {
                space_reports.push(rep);
                r.spaces.insert(s.name.clone(), space);
            }
            Err(e) => r.failures.push(format!("space {:?}: {e}", s.name)),
        }
    }
    let mut experiment_reports = Vec::new();
    for e in &m.experiments {
        match r.run_experiment(e) {
            Ok((rep, pred)) => {
                experiment_reports.push(rep.clone());
                r.experiments.insert(e.name.clone(), (rep, pred));
            }
            Err(err) => r.failures.push(format!("experiment {:?}: {err}", e.name)),
        }
    }
    let mut analysis = AnalysisResults::default();
    for a in &m.analysis.profile {
        match r.profile(a) {
            Ok(x) => analysis.profile.push(x),
            Err(e) => r.failures.push(format!("profile {:?}: {e}", a.experiment)),
        }
    }
    for a in &m.analysis.cross_train {
        match r.cross(a) {
            Ok(x) => analysis.cross_train.push(x),
            Err(e) => r.failures.push(format!("cross_train {:?}: {e}", a.name)),
        }
    }
    for a in &m.analysis.bow {
        match r.bow(a) {
            Ok(x) => analysis.bow.push(x),
            Err(e) => r.failures.push(format!("bow {:?}: {e}", a.name)),
        }
    }
    for a in &m.analysis.ensemble {
        match r.ensemble(a) {
            Ok(x) => analysis.ensemble.push(x),
            Err(e) => r.failures.push(format!("ensemble {:?}: {e}", a.name)),
        }
    }

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        manifest_hash: hash_of(&m),
        manifest: m.clone(),
        datasets: dataset_reports,
        spaces: space_reports,
        experiments: experiment_reports,
        analysis,
        failures: r.failures,
    };
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;
    Ok(RunOutcome { summary, summary_path })
}
