//! Learning curves, cross-dataset training, bag-of-words feature
//! intersection and voting ensembles.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    evaluate_predictions, top_features, train_bilstm, train_linear_select, BiLstmModel, ClassifierConfig, EvalReport,
    LinearModel, Metrics, Mode, Prediction, Predictor, LAMBDA_GRID,
};
use crate::data::{oov_rate, Label, LabeledDataset, SplitSet};
use crate::error::{Error, Result};
use crate::rng;
use crate::spaces::SemanticSpace;

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_LINEAR_EPOCHS: usize = 10;

/// How to train a model on one split set.
#[derive(Debug, Clone)]
pub enum TrainerSpec {
    Linear {
        lambdas: Vec<f64>,
        epochs: usize,
    },
    BiLstm {
        space: Arc<SemanticSpace>,
        config: ClassifierConfig,
    },
}

impl TrainerSpec {
    pub fn linear() -> Self {
        TrainerSpec::Linear {
            lambdas: LAMBDA_GRID.to_vec(),
            epochs: DEFAULT_LINEAR_EPOCHS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainerSpec::Linear { .. } => "linear",
            TrainerSpec::BiLstm { .. } => "bilstm",
        }
    }

    /// Trains on `splits` with `seed` replacing any configured seed.
    pub fn fit(&self, splits: &SplitSet, seed: u64) -> Result<(TrainedModel, EvalReport)> {
        match self {
            TrainerSpec::Linear { lambdas, epochs } => {
                let (m, _) = train_linear_select(splits, lambdas, *epochs, seed)?;
                let pred = m.predict(&splits.test);
                let metrics = evaluate_predictions(&pred, &splits.test)?.metrics;
                Ok((TrainedModel::Linear(m), EvalReport::single(metrics, None, None)))
            }
            TrainerSpec::BiLstm { space, config } => {
                let cfg = ClassifierConfig { seed, ..config.clone() };
                let (m, report) = train_bilstm(splits, space.clone(), &cfg)?;
                Ok((TrainedModel::BiLstm(Box::new(m)), report))
            }
        }
    }

    fn report_on(&self, model: &TrainedModel, test: &LabeledDataset) -> Result<EvalReport> {
        let metrics = evaluate_predictions(&model.predict(test), test)?.metrics;
        Ok(match self {
            TrainerSpec::Linear { .. } => EvalReport::single(metrics, None, None),
            TrainerSpec::BiLstm { space, config } => {
                EvalReport::single(metrics, Some(oov_rate(test, space.as_ref())), Some(config.mode()))
            }
        })
    }
}

pub enum TrainedModel {
    Linear(LinearModel),
    BiLstm(Box<BiLstmModel>),
}

impl Predictor for TrainedModel {
    fn predict(&self, d: &LabeledDataset) -> Vec<Prediction> {
        match self {
            TrainedModel::Linear(m) => m.predict(d),
            TrainedModel::BiLstm(m) => m.predict(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub train_size: usize,
    pub report: EvalReport,
}

fn check_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no fractions".into()));
    }
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::InvalidArgument("fractions must lie in (0, 1]".into()));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("fractions must be strictly ascending".into()));
    }
    if *fractions.last().expect("non-empty") != 1.0 {
        return Err(Error::InvalidArgument("fractions must end with 1.0".into()));
    }
    Ok(())
}

/// Nested stratified subsets of `train`, one per fraction. Each class is
/// shuffled once and every subset takes a prefix of that order; sentences
/// keep their original order, so fraction 1.0 returns `train` unchanged.
pub fn profile_subsets(train: &LabeledDataset, fractions: &[f64], seed: u64) -> Result<Vec<LabeledDataset>> {
    check_fractions(fractions)?;
    let mut r = rng::seeded(rng::derive_seed(seed, 0x70726f66));
    let per_class: Vec<Vec<usize>> = Label::ALL
        .iter()
        .map(|&l| {
            let idx: Vec<usize> = (0..train.len()).filter(|&i| train.sentences[i].label == l).collect();
            rng::shuffled_indices(idx.len(), &mut r)
                .into_iter()
                .map(|j| idx[j])
                .collect()
        })
        .collect();
    fractions
        .iter()
        .map(|&f| {
            let mut keep = HashSet::new();
            for (class, order) in Label::ALL.iter().zip(&per_class) {
                let n = (f * order.len() as f64).round() as usize;
                if n < 2 {
                    return Err(Error::Dataset {
                        dataset: train.name.clone(),
                        message: format!("fraction {f} leaves {n} {} examples", class.as_token()),
                    });
                }
                keep.extend(&order[..n]);
            }
            Ok(train.subset(&keep))
        })
        .collect()
}

/// Trains on growing stratified prefixes of the train split; dev and test
/// stay fixed.
pub fn profile_curve(spec: &TrainerSpec, splits: &SplitSet, fractions: &[f64], seed: u64) -> Result<Vec<CurvePoint>> {
    let subsets = profile_subsets(&splits.train, fractions, seed)?;
    subsets
        .into_par_iter()
        .zip(fractions.par_iter())
        .map(|(train, &fraction)| {
            let s = SplitSet {
                train,
                dev: splits.dev.clone(),
                test: splits.test.clone(),
                ratios: splits.ratios,
                seed: splits.seed,
            };
            let (_, report) = spec.fit(&s, seed)?;
            Ok(CurvePoint {
                fraction,
                train_size: s.train.len(),
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCell {
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

impl From<Result<EvalReport>> for CrossCell {
    fn from(r: Result<EvalReport>) -> Self {
        match r {
            Ok(report) => CrossCell {
                report: Some(report),
                error: None,
            },
            Err(e) => CrossCell {
                report: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Rows are training datasets, columns test datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTrainMatrix {
    pub datasets: Vec<String>,
    pub cells: Vec<Vec<CrossCell>>,
}

impl CrossTrainMatrix {
    pub fn get(&self, train: usize, test: usize) -> &CrossCell {
        &self.cells[train][test]
    }

    /// One metric as CSV; failed cells are written as `NA`.
    pub fn to_csv(&self, metric: &str) -> Result<String> {
        let k = Metrics::KEYS
            .iter()
            .position(|&m| m == metric)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {metric}")))?;
        let mut out = format!("train\\test,{}\n", self.datasets.join(","));
        for (name, row) in self.datasets.iter().zip(&self.cells) {
            let vals: Vec<String> = row
                .iter()
                .map(|c| {
                    c.report
                        .as_ref()
                        .map_or("NA".to_string(), |r| format!("{:.4}", r.mean.values()[k]))
                })
                .collect();
            out.push_str(&format!("{name},{}\n", vals.join(",")));
        }
        Ok(out)
    }
}

/// Trains one model per dataset and tests it on every dataset's test split.
/// Failures are recorded in the affected cells.
pub fn cross_train(datasets: &[SplitSet], spec: &TrainerSpec, seed: u64) -> Result<CrossTrainMatrix> {
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument(
            "cross-training needs at least two datasets".into(),
        ));
    }
    let cells = datasets
        .par_iter()
        .map(|train| match spec.fit(train, seed) {
            Ok((model, _)) => datasets
                .iter()
                .map(|d| spec.report_on(&model, &d.test).into())
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                vec![
                    CrossCell {
                        report: None,
                        error: Some(msg),
                    };
                    datasets.len()
                ]
            }
        })
        .collect();
    Ok(CrossTrainMatrix {
        datasets: datasets.iter().map(|d| d.name().to_string()).collect(),
        cells,
    })
}

pub fn default_function_words() -> BTreeSet<String> {
    parse_word_list(include_str!("../data/function_words.txt"))
}

fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_function_words(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowReport {
    pub k: usize,
    pub models: Vec<String>,
    /// Features in the top-k lists of every model.
    pub intersection: Vec<String>,
    pub content: Vec<String>,
    pub function: Vec<String>,
    pub bigrams: Vec<String>,
    /// Content unigrams per function unigram; absent when no function word
    /// survives.
    pub content_per_function: Option<f64>,
}

/// Intersects the top-k positive and negative features of each model and
/// sorts the surviving unigrams into content and function words.
pub fn bow_report(models: &[(String, LinearModel)], k: usize, function_words: &BTreeSet<String>) -> Result<BowReport> {
    if models.is_empty() {
        return Err(Error::EmptyInput("bow models".into()));
    }
    let mut sets = models.iter().map(|(_, m)| {
        let t = top_features(m, k);
        t.positive.into_iter().chain(t.negative).collect::<BTreeSet<String>>()
    });
    let first = sets.next().expect("non-empty");
    let intersection: BTreeSet<String> = sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect());
    let (bigrams, unigrams): (Vec<String>, Vec<String>) = intersection.iter().cloned().partition(|f| f.contains('_'));
    let (function, content): (Vec<String>, Vec<String>) =
        unigrams.into_iter().partition(|w| function_words.contains(w.as_str()));
    Ok(BowReport {
        k,
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        intersection: intersection.into_iter().collect(),
        content_per_function: (!function.is_empty()).then(|| content.len() as f64 / function.len() as f64),
        content,
        function,
        bigrams,
    })
}

/// Weights proportional to each member's dev F1.
pub fn dev_f1_weights(dev_f1: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = dev_f1.iter().sum();
    if dev_f1.iter().any(|&f| !(f >= 0.0 && f.is_finite())) || total <= 0.0 {
        return Err(Error::InvalidArgument(
            "dev F1 weights must be non-negative and not all zero".into(),
        ));
    }
    Ok(dev_f1.iter().map(|f| f / total).collect())
}

/// Hard-label voting. Unweighted members each get one vote; ties go to
/// `Argument`. The output follows the first member's order and its score is
/// the (weighted) share of `Argument` votes.
pub fn ensemble_predict(members: &[Vec<Prediction>], weights: Option<&[f64]>) -> Result<Vec<Prediction>> {
    let Some(first) = members.first() else {
        return Err(Error::EmptyInput("ensemble members".into()));
    };
    if let Some(w) = weights {
        if w.len() != members.len() {
            return Err(Error::LengthMismatch {
                left: w.len(),
                right: members.len(),
            });
        }
        if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be non-negative and not all zero".into(),
            ));
        }
    }
    let order: Vec<&str> = first.iter().map(|p| p.id.as_str()).collect();
    let mut lookups: Vec<HashMap<&str, Label>> = Vec::with_capacity(members.len());
    for (m, preds) in members.iter().enumerate() {
        let map: HashMap<&str, Label> = preds.iter().map(|p| (p.id.as_str(), p.label)).collect();
        if map.len() != preds.len() {
            return Err(Error::IdMismatch(format!("member {m} repeats ids")));
        }
        let missing: Vec<&str> = order
            .iter()
            .copied()
            .filter(|id| !map.contains_key(id))
            .take(5)
            .collect();
        if !missing.is_empty() || map.len() != order.len() {
            let first_ids: HashSet<&str> = order.iter().copied().collect();
            let extra: Vec<&str> = map
                .keys()
                .copied()
                .filter(|id| !first_ids.contains(id))
                .take(5)
                .collect();
            return Err(Error::IdMismatch(format!(
                "member {m}: missing {missing:?}, unexpected {extra:?}"
            )));
        }
        lookups.push(map);
    }
    let uniform = vec![1.0; members.len()];
    let w = weights.unwrap_or(&uniform);
    let total: f64 = w.iter().sum();
    Ok(order
        .iter()
        .map(|&id| {
            let (mut pos, mut neg) = (0.0, 0.0);
            for (map, &wi) in lookups.iter().zip(w) {
                match map[id] {
                    Label::Argument => pos += wi,
                    Label::NonArgument => neg += wi,
                }
            }
            Prediction {
                id: id.to_string(),
                label: Label::from_bool(pos >= neg),
                score: pos / total,
            }
        })
        .collect())
}

/// Mean and sample standard deviation over runs.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("run reports".into()));
    }
    let n = reports.len() as f64;
    let columns: Vec<Vec<f64>> = (0..5)
        .map(|k| reports.iter().map(|r| r.mean.values()[k]).collect())
        .collect();
    // identical runs keep their exact value and a zero spread
    let mean = std::array::from_fn(|k| {
        let c = &columns[k];
        if c.iter().all(|&v| v == c[0]) {
            c[0]
        } else {
            c.iter().sum::<f64>() / n
        }
    });
    let std = (reports.len() > 1).then(|| {
        Metrics::from_values(std::array::from_fn(|k| {
            let ss: f64 = columns[k].iter().map(|v| (v - mean[k]) * (v - mean[k])).sum();
            (ss / (n - 1.0)).sqrt()
        }))
    });
    let oov: Vec<f64> = reports.iter().filter_map(|r| r.oov_rate).collect();
    let mode: Option<Mode> = reports[0].mode.filter(|m| reports.iter().all(|r| r.mode == Some(*m)));
    Ok(EvalReport {
        mean: Metrics::from_values(mean),
        std,
        oov_rate: (!oov.is_empty()).then(|| oov.iter().sum::<f64>() / oov.len() as f64),
        mode,
        runs: reports.len(),
    })
}

/// Predictions produced outside this toolkit, e.g. by a fine-tuned
/// transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPredictions {
    pub model: String,
    pub split: Option<String>,
    pub predictions: Vec<Prediction>,
}

impl ExternalPredictions {
    /// Reads `id label score` rows preceded by `# model=NAME split=SPLIT`.
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut model = None;
        let mut split = None;
        let mut predictions = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches('\r');
            let ln = i + 1;
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("model", v)) => model = Some(v.to_string()),
                        Some(("split", v)) => split = Some(v.to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("expected 3 columns, found {}", cols.len()),
                ));
            }
            let label: Label = cols[1].parse().map_err(|e| Error::parse(path, ln, e))?;
            let score: f64 = cols[2]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite() && (0.0..=1.0).contains(s))
                .ok_or_else(|| Error::parse(path, ln, format!("score {:?} is not in [0, 1]", cols[2])))?;
            if !seen.insert(cols[0].to_string()) {
                return Err(Error::parse(path, ln, format!("duplicate id {}", cols[0])));
            }
            predictions.push(Prediction {
                id: cols[0].to_string(),
                label,
                score,
            });
        }
        let model = model.ok_or_else(|| Error::parse(path, 1, "missing `# model=` metadata line"))?;
        if predictions.is_empty() {
            return Err(Error::EmptyInput(path.display().to_string()));
        }
        Ok(ExternalPredictions {
            model,
            split,
            predictions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        match &self.split {
            Some(s) => writeln!(w, "# model={} split={s}", self.model),
            None => writeln!(w, "# model={}", self.model),
        }
        .map_err(io)?;
        for p in &self.predictions {
            writeln!(w, "{}\t{}\t{}", p.id, p.label.as_token(), p.score).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reorders to `d`, which must contain exactly the same ids.
    pub fn align(&self, d: &LabeledDataset) -> Result<Vec<Prediction>> {
        let by_id: BTreeMap<&str, &Prediction> = self.predictions.iter().map(|p| (p.id.as_str(), p)).collect();
        let unknown: Vec<&str> = by_id
            .keys()
            .copied()
            .filter(|id| !d.sentences.iter().any(|s| s.id == *id))
            .take(5)
            .collect();
        if !unknown.is_empty() {
            return Err(Error::IdMismatch(format!(
                "{}: ids not in {}: {unknown:?}",
                self.model, d.name
            )));
        }
        d.sentences
            .iter()
            .map(|s| {
                by_id
                    .get(s.id.as_str())
                    .map(|p| (*p).clone())
                    .ok_or_else(|| Error::IdMismatch(format!("{}: no prediction for {}", self.model, s.id)))
            })
            .collect()
    }
}
