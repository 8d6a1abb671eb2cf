//! BiLSTM sentence classifier over a transferred semantic space.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::lstm::{self, BatchGrad, BatchShape, BiLstmParams};
use super::metrics::{evaluate, EvalReport, Mode};
use super::{Prediction, Predictor};
use crate::data::{oov_rate, Label, LabeledDataset, Sentence, SplitSet};
use crate::error::{Error, Result};
use crate::rng;
use crate::spaces::{OovPolicy, SemanticSpace};

pub const CHECKPOINT_VERSION: u32 = 1;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub lr: f64,
    /// Keep probability of the dropout on the sentence vector.
    pub dropout_keep: f64,
    pub lstm_units: usize,
    pub trainable_embeddings: bool,
    pub seed: u64,
    #[serde(default)]
    pub oov: OovPolicy,
}

impl ClassifierConfig {
    /// Settings used for UKPS and WEBIS.
    pub fn ukps_webis() -> Self {
        ClassifierConfig {
            epochs: 10,
            batch_size: 64,
            seq_len: 30,
            lr: 0.01,
            dropout_keep: 0.8,
            lstm_units: 48,
            trainable_embeddings: false,
            seed: 0,
            oov: OovPolicy::default(),
        }
    }

    /// Settings used for ARAUC.
    pub fn arauc() -> Self {
        ClassifierConfig {
            epochs: 20,
            batch_size: 16,
            seq_len: 15,
            lr: 0.001,
            dropout_keep: 0.7,
            lstm_units: 1,
            ..Self::ukps_webis()
        }
    }

    pub fn mode(&self) -> Mode {
        if self.trainable_embeddings {
            Mode::Trainable
        } else {
            Mode::Frozen
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.seq_len == 0 {
            problems.push("seq_len must be at least 1".to_string());
        }
        if self.lstm_units == 0 {
            problems.push("lstm_units must be at least 1".to_string());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push("lr must be positive".to_string());
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            problems.push("dropout_keep must be in (0, 1]".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::ukps_webis()
    }
}

/// Rows of the semantic space needed by one classifier, plus a zero padding
/// row and a shared unknown-word row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    rows: BTreeMap<String, usize>,
    matrix: Array2<f64>,
}

impl EmbeddingTable {
    pub fn build(space: &SemanticSpace, vocab: &BTreeSet<String>, oov: OovPolicy) -> Self {
        let words: Vec<&String> = vocab.iter().filter(|w| space.index_of(w).is_some()).collect();
        let dim = space.dim();
        let mut matrix = Array2::zeros((words.len() + 2, dim));
        for (dst, v) in matrix.row_mut(UNK).iter_mut().zip(oov.vector(dim)) {
            *dst = v as f64;
        }
        let mut rows = BTreeMap::new();
        for (i, w) in words.into_iter().enumerate() {
            let v = space.vector(w).expect("filtered");
            for (dst, &x) in matrix.row_mut(i + 2).iter_mut().zip(v) {
                *dst = x as f64;
            }
            rows.insert(w.clone(), i + 2);
        }
        EmbeddingTable { rows, matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row_of(&self, word: &str) -> Option<usize> {
        self.rows.get(word).copied()
    }

    pub fn vector(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.row_of(word).map(|r| self.matrix.row(r))
    }

    /// Row ids for a token sequence, truncated or padded to `seq_len`.
    pub fn ids(&self, tokens: &[String], seq_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens
            .iter()
            .take(seq_len)
            .map(|t| self.row_of(t).unwrap_or(UNK))
            .collect();
        ids.resize(seq_len, PAD);
        ids
    }

    pub fn gather(&self, ids: &[usize]) -> Array2<f64> {
        let mut x = Array2::zeros((ids.len(), self.dim()));
        for (mut dst, &id) in x.rows_mut().into_iter().zip(ids) {
            dst.assign(&self.matrix.row(id));
        }
        x
    }
}

/// Summed input gradients per table row.
pub type RowGrads = Vec<(usize, Array1<f64>)>;

/// Loss and gradients of one batch given table row ids (`PAD` marks
/// padding). Row gradients come back sorted by row.
pub fn embedding_loss_and_grad(
    params: &BiLstmParams,
    table: &Array2<f64>,
    ids: &[usize],
    shape: BatchShape,
    targets: &[f64],
    dropout: Option<&Array2<f64>>,
) -> Result<(BatchGrad, RowGrads)> {
    let mut x = Array2::zeros((ids.len(), table.ncols()));
    for (mut dst, &id) in x.rows_mut().into_iter().zip(ids) {
        dst.assign(&table.row(id));
    }
    let mask: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();
    let g = lstm::loss_and_grad(params, x.view(), &mask, shape, targets, dropout)?;
    let mut rows: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
    for (r, &id) in ids.iter().enumerate() {
        if id == PAD {
            continue;
        }
        let src = g.input.row(r);
        match rows.get_mut(&id) {
            Some(acc) => *acc += &src,
            None => {
                rows.insert(id, src.to_owned());
            }
        }
    }
    Ok((g, rows.into_iter().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiLstmModel {
    pub config: ClassifierConfig,
    pub params: BiLstmParams,
    pub table: EmbeddingTable,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Fallback for words outside the table; not part of checkpoints.
    #[serde(skip)]
    space: Option<Arc<SemanticSpace>>,
}

#[derive(Deserialize)]
struct Checkpoint {
    format_version: u32,
    model: BiLstmModel,
}

impl BiLstmModel {
    pub fn attach_space(&mut self, space: Arc<SemanticSpace>) {
        self.space = Some(space);
    }

    pub fn space(&self) -> Option<&Arc<SemanticSpace>> {
        self.space.as_ref()
    }

    fn encode(&self, sentences: &[&Sentence]) -> (Array2<f64>, Vec<bool>) {
        let t = self.config.seq_len;
        let dim = self.table.dim();
        let mut x = Array2::zeros((sentences.len() * t, dim));
        let mut mask = vec![false; sentences.len() * t];
        for (b, s) in sentences.iter().enumerate() {
            for (i, tok) in s.tokens.iter().take(t).enumerate() {
                let row = b * t + i;
                mask[row] = true;
                let mut dst = x.row_mut(row);
                if let Some(v) = self.table.vector(tok) {
                    dst.assign(&v);
                } else if let Some(v) = self.space.as_ref().and_then(|sp| sp.vector(tok)) {
                    dst.iter_mut().zip(v).for_each(|(d, &x)| *d = x as f64);
                } else {
                    dst.assign(&self.table.matrix.row(UNK));
                }
            }
        }
        (x, mask)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let ck = CheckpointRef {
            format_version: CHECKPOINT_VERSION,
            model: self,
        };
        serde_json::to_writer(BufWriter::new(f), &ck)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(f))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::parse(
                path,
                1,
                format!("unsupported checkpoint version {}", ck.format_version),
            ));
        }
        ck.model.params.check()?;
        Ok(ck.model)
    }
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format_version: u32,
    model: &'a BiLstmModel,
}

const PREDICT_BATCH: usize = 256;

impl Predictor for BiLstmModel {
    fn predict(&self, d: &LabeledDataset) -> Vec<Prediction> {
        let mut out = Vec::with_capacity(d.len());
        let refs: Vec<&Sentence> = d.sentences.iter().collect();
        for chunk in refs.chunks(PREDICT_BATCH) {
            let (x, mask) = self.encode(chunk);
            let shape = BatchShape {
                batch: chunk.len(),
                steps: self.config.seq_len,
            };
            let logits = lstm::logits(&self.params, x.view(), &mask, shape).expect("shapes fixed at training");
            for (s, &l) in chunk.iter().zip(logits.iter()) {
                let p = lstm::probability(l);
                out.push(Prediction {
                    id: s.id.clone(),
                    label: Label::from_bool(p >= 0.5),
                    score: p,
                });
            }
        }
        out
    }
}

fn macro_f1(model: &BiLstmModel, d: &LabeledDataset) -> Result<f64> {
    let pred: Vec<Label> = model.predict(d).into_iter().map(|p| p.label).collect();
    Ok(evaluate(&pred, &d.labels())?.metrics.f1)
}

/// Trains on `splits.train`, keeps the epoch with the best dev macro F1 and
/// reports test metrics. With `trainable_embeddings` off the table is never
/// updated.
pub fn train_bilstm(
    splits: &SplitSet,
    space: Arc<SemanticSpace>,
    cfg: &ClassifierConfig,
) -> Result<(BiLstmModel, EvalReport)> {
    cfg.validate()?;
    for (part, d) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        if d.is_empty() {
            return Err(Error::EmptyInput(format!("{part} split of {}", d.name)));
        }
    }
    let vocab: BTreeSet<String> = splits
        .train
        .sentences
        .iter()
        .flat_map(|s| s.tokens.iter().take(cfg.seq_len).cloned())
        .collect();
    let table = EmbeddingTable::build(&space, &vocab, cfg.oov);
    let dim = table.dim();
    let hu = cfg.lstm_units;

    let mut init_rng = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let mut order_rng = rng::seeded(rng::derive_seed(cfg.seed, 2));
    let mut drop_rng = rng::seeded(rng::derive_seed(cfg.seed, 3));
    let mut model = BiLstmModel {
        config: cfg.clone(),
        params: BiLstmParams::init(dim, hu, &mut init_rng),
        table,
        history: Vec::new(),
        best_epoch: 0,
        space: Some(space.clone()),
    };

    let mut sizes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
    sizes.push(model.table.matrix.len());
    let mut adam = Adam::new(cfg.lr, &sizes);

    let train = &splits.train.sentences;
    let ids: Vec<Vec<usize>> = train.iter().map(|s| model.table.ids(&s.tokens, cfg.seq_len)).collect();
    let mut best: Option<(f64, BiLstmParams, Array2<f64>)> = None;

    for epoch in 0..cfg.epochs {
        let order = rng::shuffled_indices(train.len(), &mut order_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let shape = BatchShape {
                batch: chunk.len(),
                steps: cfg.seq_len,
            };
            let batch_ids: Vec<usize> = chunk.iter().flat_map(|&i| ids[i].iter().copied()).collect();
            let targets: Vec<f64> = chunk
                .iter()
                .map(|&i| if train[i].label.is_positive() { 1.0 } else { 0.0 })
                .collect();
            let dropout = (cfg.dropout_keep < 1.0).then(|| {
                Array2::from_shape_fn((chunk.len(), 2 * hu), |_| {
                    if drop_rng.random::<f64>() < cfg.dropout_keep {
                        1.0 / cfg.dropout_keep
                    } else {
                        0.0
                    }
                })
            });
            let (g, row_grads) = embedding_loss_and_grad(
                &model.params,
                &model.table.matrix,
                &batch_ids,
                shape,
                &targets,
                dropout.as_ref(),
            )?;
            if !g.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            loss_sum += g.loss;
            batches += 1;

            adam.tick();
            let grads = g.params.tensors();
            for (slot, (p, gr)) in model.params.tensors_mut().into_iter().zip(grads).enumerate() {
                adam.update(slot, p, gr);
            }
            if cfg.trainable_embeddings {
                let table = model.table.matrix.as_slice_mut().expect("standard layout");
                for (row, gr) in &row_grads {
                    let off = row * dim;
                    adam.update_segment(8, off, &mut table[off..off + dim], gr.as_slice().expect("contiguous"));
                }
            }
        }
        let dev_f1 = macro_f1(&model, &splits.dev)?;
        model.history.push(EpochRecord {
            epoch,
            loss: loss_sum / batches as f64,
            dev_f1,
        });
        if best.as_ref().is_none_or(|(b, _, _)| dev_f1 > *b) {
            model.best_epoch = epoch;
            best = Some((dev_f1, model.params.clone(), model.table.matrix.clone()));
        }
    }
    let (_, params, matrix) = best.expect("at least one epoch");
    model.params = params;
    model.table.matrix = matrix;

    let pred: Vec<Label> = model.predict(&splits.test).into_iter().map(|p| p.label).collect();
    let metrics = evaluate(&pred, &splits.test.labels())?.metrics;
    let report = EvalReport::single(metrics, Some(oov_rate(&splits.test, space.as_ref())), Some(cfg.mode()));
    Ok((model, report))
}

/// True when every table row of an in-space word equals the space vector
/// bit for bit.
pub fn table_matches_space(table: &EmbeddingTable, space: &SemanticSpace) -> bool {
    table.rows.iter().all(|(w, &r)| {
        let v = space.vector(w).expect("table words come from the space");
        table
            .matrix
            .row(r)
            .iter()
            .zip(v)
            .all(|(&a, &b)| (a as f32).to_bits() == b.to_bits() && a == b as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split;
    use crate::spaces::{random_space, SpaceFamily, SpaceMeta};

    fn toy_dataset(n: usize) -> LabeledDataset {
        let mut s = Vec::new();
        for i in 0..n {
            let (text, label) = if i % 2 == 0 {
                (format!("we should ban this because w{}", i % 7), Label::Argument)
            } else {
                (format!("the meeting is on day d{}", i % 5), Label::NonArgument)
            };
            s.push(Sentence::new(format!("s{i}"), text, label, "toy"));
        }
        LabeledDataset::new("toy", s)
    }

    fn toy_space(d: &LabeledDataset, dim: usize) -> SemanticSpace {
        let vocab: BTreeSet<String> = d.sentences.iter().flat_map(|s| s.tokens.iter().cloned()).collect();
        random_space(&vocab, dim, 5).unwrap()
    }

    fn small_cfg() -> ClassifierConfig {
        ClassifierConfig {
            epochs: 3,
            batch_size: 8,
            seq_len: 8,
            lr: 0.01,
            dropout_keep: 0.8,
            lstm_units: 4,
            trainable_embeddings: false,
            seed: 11,
            oov: OovPolicy::default(),
        }
    }

    #[test]
    fn presets() {
        let a = ClassifierConfig::ukps_webis();
        assert_eq!((a.epochs, a.batch_size, a.seq_len, a.lstm_units), (10, 64, 30, 48));
        let b = ClassifierConfig::arauc();
        assert_eq!((b.epochs, b.batch_size, b.seq_len, b.lstm_units), (20, 16, 15, 1));
        assert_eq!((b.lr, b.dropout_keep), (0.001, 0.7));
        let bad = ClassifierConfig {
            seq_len: 0,
            dropout_keep: 0.0,
            ..a
        };
        match bad.validate() {
            Err(Error::Validation(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn frozen_training_keeps_space_and_table() {
        let d = toy_dataset(60);
        let space = Arc::new(toy_space(&d, 6));
        let before = space.checksum();
        let splits = split(&d, 2).unwrap();
        let (model, report) = train_bilstm(&splits, space.clone(), &small_cfg()).unwrap();
        assert_eq!(space.checksum(), before);
        assert!(table_matches_space(&model.table, &space));
        assert_eq!(report.mode, Some(Mode::Frozen));
        assert_eq!(model.history.len(), 3);
    }

    #[test]
    fn trainable_training_moves_table_and_learns() {
        let d = toy_dataset(80);
        let space = Arc::new(toy_space(&d, 6));
        let splits = split(&d, 2).unwrap();
        let cfg = ClassifierConfig {
            trainable_embeddings: true,
            epochs: 8,
            ..small_cfg()
        };
        let (model, report) = train_bilstm(&splits, space.clone(), &cfg).unwrap();
        assert!(!table_matches_space(&model.table, &space));
        assert!(report.mean.accuracy > 0.9, "{report:?}");
    }

    #[test]
    fn bit_reproducible() {
        let d = toy_dataset(40);
        let space = Arc::new(toy_space(&d, 4));
        let splits = split(&d, 1).unwrap();
        let (a, ra) = train_bilstm(&splits, space.clone(), &small_cfg()).unwrap();
        let (b, rb) = train_bilstm(&splits, space, &small_cfg()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(ra, rb);
    }

    #[test]
    fn checkpoint_round_trip() {
        let d = toy_dataset(40);
        let space = Arc::new(toy_space(&d, 4));
        let splits = split(&d, 1).unwrap();
        let (m, _) = train_bilstm(&splits, space.clone(), &small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        m.save(&p).unwrap();
        let mut back = BiLstmModel::load(&p).unwrap();
        assert_eq!(back.params, m.params);
        back.attach_space(space);
        assert_eq!(back.predict(&splits.test), m.predict(&splits.test));
    }

    #[test]
    fn table_gradients_match_finite_differences() {
        let mut r = rng::seeded(9);
        let meta = SpaceMeta::new(SpaceFamily::Random, "t");
        let space = SemanticSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.7, 0.0, -0.6],
            3,
            meta,
        )
        .unwrap();
        let vocab: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let table = EmbeddingTable::build(&space, &vocab, OovPolicy::Unknown { seed: 4 });
        let params = BiLstmParams::init(3, 2, &mut r);
        let shape = BatchShape { batch: 2, steps: 3 };
        let ids = [2, 3, 2, UNK, 4, PAD];
        let targets = [1.0, 0.0];
        let (_, rows) = embedding_loss_and_grad(&params, table.matrix(), &ids, shape, &targets, None).unwrap();
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        let h = 1e-6;
        for (row, g) in rows {
            for k in 0..3 {
                let mut tp = table.matrix().clone();
                tp[[row, k]] += h;
                let mut tm = table.matrix().clone();
                tm[[row, k]] -= h;
                let lp = embedding_loss_and_grad(&params, &tp, &ids, shape, &targets, None)
                    .unwrap()
                    .0
                    .loss;
                let lm = embedding_loss_and_grad(&params, &tm, &ids, shape, &targets, None)
                    .unwrap()
                    .0
                    .loss;
                let num = (lp - lm) / (2.0 * h);
                let rel = (g[k] - num).abs() / (g[k].abs() + num.abs()).max(1e-8);
                assert!(rel < 1e-4, "row {row} col {k}: {} vs {num}", g[k]);
            }
        }
    }

    #[test]
    fn unseen_words_fall_back_to_space() {
        let d = toy_dataset(40);
        let space = Arc::new(toy_space(&d, 4));
        let splits = split(&d, 1).unwrap();
        let (mut m, _) = train_bilstm(&splits, space, &small_cfg()).unwrap();
        let other = LabeledDataset::new("o", vec![Sentence::new("x", "zzz unknown words", Label::Argument, "o")]);
        assert_eq!(m.predict(&other).len(), 1);
        m.space = None;
        assert_eq!(m.predict(&other).len(), 1);
    }
}
