//! Skip-gram with negative sampling.
//!
//! Center-word vectors are the output space; context vectors are the
//! auxiliary output layer. Each observed (center, context) pair receives one
//! positive update followed by `negatives` updates against words drawn from
//! the unigram distribution raised to the 3/4 power. The learning rate decays
//! linearly to `lr / 10_000` over training.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lexproject::{CorpusSource, ProjectedCorpus};
use crate::rng;
use crate::spaces::{init_bound, SemanticSpace, SpaceFamily, SpaceMeta, DEFAULT_DIM};

pub const WINDOW_GRID: [usize; 3] = [3, 10, 20];
pub const NEGATIVES_GRID: [usize; 3] = [5, 25, 100];
pub const LR_GRID: [f64; 3] = [0.1, 0.01, 0.001];
pub const EPOCHS_GRID: [usize; 3] = [1, 5, 10];

const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub lr: f64,
    pub epochs: usize,
    pub min_count: usize,
    pub seed: u64,
    /// Number of concurrent workers. Only 1 is reproducible.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: DEFAULT_DIM,
            window: 10,
            negatives: 5,
            lr: 0.01,
            epochs: 5,
            min_count: 1,
            seed: 1,
            workers: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
            ("min_count", self.min_count),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("sgns {name} must be positive")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument("sgns lr must be positive".into()));
        }
        Ok(())
    }

    /// Short content hash of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// The full four-parameter grid in nested (window, negatives, lr, epochs) order.
pub fn default_grid(base: &SgnsConfig) -> Vec<SgnsConfig> {
    let mut out = Vec::with_capacity(81);
    for &window in &WINDOW_GRID {
        for &negatives in &NEGATIVES_GRID {
            for &lr in &LR_GRID {
                for &epochs in &EPOCHS_GRID {
                    out.push(SgnsConfig {
                        window,
                        negatives,
                        lr,
                        epochs,
                        ..base.clone()
                    });
                }
            }
        }
    }
    out
}

/// Negative-sampling distribution over vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramTable {
    words: Vec<String>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl UnigramTable {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, word: &str) -> Option<f64> {
        self.words.iter().position(|w| w == word).map(|i| self.probs[i])
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    fn from_counts(words: Vec<String>, counts: &[usize]) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let z: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        UnigramTable {
            words,
            probs,
            cumulative,
        }
    }
}

/// P(w) proportional to count(w)^0.75.
pub fn build_unigram_table(counts: &BTreeMap<String, usize>) -> Result<UnigramTable> {
    if counts.is_empty() {
        return Err(Error::EmptyInput("unigram counts".into()));
    }
    if let Some((w, _)) = counts.iter().find(|(_, &c)| c == 0) {
        return Err(Error::InvalidArgument(format!("zero count for {w:?}")));
    }
    let words: Vec<String> = counts.keys().cloned().collect();
    let c: Vec<usize> = counts.values().copied().collect();
    Ok(UnigramTable::from_counts(words, &c))
}

fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus<F: Float>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Negative log-likelihood of one (word, context) pair.
pub fn pair_loss<F: Float>(w: &[F], c: &[F], positive: bool) -> F {
    let x = dot(w, c);
    if positive {
        softplus(-x)
    } else {
        softplus(x)
    }
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// One stochastic step on a pair: `w += lr*g*c`, `c += lr*g*w_old` with
/// `g = label - sigmoid(w.c)`. Returns the pair loss before the step.
fn step<F: Float>(w: &mut [F], c: &mut [F], positive: bool, lr: F) -> F {
    let x = dot(w, c);
    let label = if positive { F::one() } else { F::zero() };
    let g = (label - sigmoid(x)) * lr;
    for (wi, ci) in w.iter_mut().zip(c.iter_mut()) {
        let w_old = *wi;
        *wi = w_old + g * *ci;
        *ci = *ci + g * w_old;
    }
    if positive {
        softplus(-x)
    } else {
        softplus(x)
    }
}

/// Checked single-pair update; see [`pair_loss`] for the returned value.
pub fn sgns_update<F: Float>(w: &mut [F], c: &mut [F], positive: bool, lr: F) -> Result<F> {
    if w.len() != c.len() {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: c.len(),
        });
    }
    if !lr.is_finite() || w.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite input to sgns update".into()));
    }
    Ok(step(w, c, positive, lr))
}

/// Row-major f32 matrix readable and writable from several workers at once.
/// Concurrent row writes may overwrite each other.
struct SharedMatrix {
    data: Vec<AtomicU32>,
    dim: usize,
}

impl SharedMatrix {
    fn from_values(values: impl IntoIterator<Item = f32>, dim: usize) -> Self {
        SharedMatrix {
            data: values.into_iter().map(|v| AtomicU32::new(v.to_bits())).collect(),
            dim,
        }
    }

    fn load(&self, row: usize, out: &mut [f32]) {
        let src = &self.data[row * self.dim..(row + 1) * self.dim];
        for (o, a) in out.iter_mut().zip(src) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn store(&self, row: usize, values: &[f32]) {
        let dst = &self.data[row * self.dim..(row + 1) * self.dim];
        for (a, v) in dst.iter().zip(values) {
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_values(self) -> Vec<f32> {
        self.data.into_iter().map(|a| f32::from_bits(a.into_inner())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Mean pair loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub updates: u64,
    pub vocab_size: usize,
}

struct Vocab {
    words: Vec<String>,
    counts: Vec<usize>,
    lines: Vec<Vec<u32>>,
}

fn build_corpus_vocab(corpus: &ProjectedCorpus, min_count: usize) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in corpus.lines.iter().flatten() {
        *counts.entry(tok.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    // frequency order, ties alphabetical
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: HashMap<&str, u32> = kept.iter().enumerate().map(|(i, (w, _))| (*w, i as u32)).collect();
    let lines = corpus
        .lines
        .iter()
        .map(|l| {
            l.iter()
                .filter_map(|t| index.get(t.as_str()).copied())
                .collect::<Vec<u32>>()
        })
        .filter(|l| !l.is_empty())
        .collect();
    Vocab {
        words: kept.iter().map(|(w, _)| w.to_string()).collect(),
        counts: kept.iter().map(|&(_, c)| c).collect(),
        lines,
    }
}

struct Shared<'a> {
    cfg: &'a SgnsConfig,
    table: &'a UnigramTable,
    input: &'a SharedMatrix,
    output: &'a SharedMatrix,
    processed: &'a AtomicU64,
    total_tokens: u64,
}

impl Shared<'_> {
    fn run_shard(&self, lines: &[Vec<u32>], worker_seed: u64) -> (f64, u64) {
        let dim = self.cfg.dim;
        let mut r = rng::seeded(worker_seed);
        let window = Uniform::new_inclusive(1, self.cfg.window).expect("window >= 1");
        let mut center = vec![0f32; dim];
        let mut ctx = vec![0f32; dim];
        let (mut loss, mut updates) = (0.0f64, 0u64);
        for line in lines {
            for (i, &w) in line.iter().enumerate() {
                let done = self.processed.fetch_add(1, Ordering::Relaxed) as f64;
                let frac = (1.0 - done / self.total_tokens as f64).max(MIN_LR_FRACTION);
                let lr = (self.cfg.lr * frac) as f32;
                let b = window.sample(&mut r);
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(line.len() - 1);
                for (j, &c) in line.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    self.input.load(w as usize, &mut center);
                    self.output.load(c as usize, &mut ctx);
                    loss += step(&mut center, &mut ctx, true, lr) as f64;
                    self.output.store(c as usize, &ctx);
                    updates += 1;
                    for _ in 0..self.cfg.negatives {
                        let n = self.table.sample(&mut r) as u32;
                        if n == c {
                            continue;
                        }
                        self.output.load(n as usize, &mut ctx);
                        loss += step(&mut center, &mut ctx, false, lr) as f64;
                        self.output.store(n as usize, &ctx);
                        updates += 1;
                    }
                    self.input.store(w as usize, &center);
                }
            }
        }
        (loss, updates)
    }
}

fn family_for(source: CorpusSource) -> SpaceFamily {
    match source {
        CorpusSource::Network => SpaceFamily::Network,
        CorpusSource::Association => SpaceFamily::FeatureBased,
        CorpusSource::Text => SpaceFamily::Corpus,
    }
}

/// Trains a space over `corpus`. Context windows never cross line
/// boundaries.
pub fn train_skipgram(corpus: &ProjectedCorpus, cfg: &SgnsConfig) -> Result<(SemanticSpace, TrainStats)> {
    cfg.validate()?;
    if corpus.lines.is_empty() {
        return Err(Error::EmptyInput("training corpus".into()));
    }
    let vocab = build_corpus_vocab(corpus, cfg.min_count);
    if vocab.words.is_empty() {
        return Err(Error::EmptyInput(format!(
            "vocabulary after pruning with min_count={}",
            cfg.min_count
        )));
    }
    let dim = cfg.dim;
    let n = vocab.words.len();
    let table = UnigramTable::from_counts(vocab.words.clone(), &vocab.counts);

    let bound = init_bound(dim);
    let init = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
    let mut init_rng = rng::seeded(rng::derive_seed(cfg.seed, 0));
    let input = SharedMatrix::from_values((0..n * dim).map(|_| init.sample(&mut init_rng)), dim);
    let output = SharedMatrix::from_values(std::iter::repeat_n(0.0, n * dim), dim);

    let tokens_per_epoch: u64 = vocab.lines.iter().map(|l| l.len() as u64).sum();
    let processed = AtomicU64::new(0);
    let shared = Shared {
        cfg,
        table: &table,
        input: &input,
        output: &output,
        processed: &processed,
        total_tokens: tokens_per_epoch * cfg.epochs as u64,
    };

    let workers = cfg.workers.min(vocab.lines.len()).max(1);
    let shard_len = vocab.lines.len().div_ceil(workers);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut total_updates = 0u64;
    for epoch in 0..cfg.epochs {
        let base = rng::derive_seed(cfg.seed, 1 + epoch as u64);
        let (loss, updates) = if workers == 1 {
            shared.run_shard(&vocab.lines, base)
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = vocab
                    .lines
                    .chunks(shard_len)
                    .enumerate()
                    .map(|(k, shard)| {
                        let shared = &shared;
                        s.spawn(move || shared.run_shard(shard, rng::derive_seed(base, k as u64)))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sgns worker panicked"))
                    .fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
            })
        };
        let mean = if updates == 0 { 0.0 } else { loss / updates as f64 };
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        epoch_losses.push(mean);
        total_updates += updates;
    }

    let mut meta = SpaceMeta::new(family_for(corpus.source), "sgns");
    meta.config_hash = Some(cfg.hash());
    let space = SemanticSpace::new(vocab.words, input.into_values(), dim, meta)?;
    Ok((
        space,
        TrainStats {
            epoch_losses,
            updates: total_updates,
            vocab_size: n,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn counts(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|&(w, c)| (w.to_string(), c)).collect()
    }

    #[test]
    fn unigram_examples() {
        let t = build_unigram_table(&counts(&[("a", 1), ("b", 1)])).unwrap();
        assert_abs_diff_eq!(t.probability("a").unwrap(), 0.5, epsilon = 1e-12);
        let t = build_unigram_table(&counts(&[("a", 16), ("b", 1)])).unwrap();
        assert_abs_diff_eq!(t.probability("a").unwrap(), 8.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.probability("b").unwrap(), 1.0 / 9.0, epsilon = 1e-12);
        let t = build_unigram_table(&counts(&[("solo", 3)])).unwrap();
        assert_eq!(t.probabilities(), &[1.0]);
        assert!(build_unigram_table(&counts(&[("a", 0)])).is_err());
        assert!(build_unigram_table(&BTreeMap::new()).is_err());
    }

    #[test]
    fn update_examples() {
        let mut w = [0.0f64; 2];
        let mut c = [0.0f64; 2];
        sgns_update(&mut w, &mut c, true, 0.1).unwrap();
        assert_eq!((w, c), ([0.0; 2], [0.0; 2]));

        let mut w = [1.0f64, 0.0];
        let mut c = [1.0f64, 0.0];
        sgns_update(&mut w, &mut c, true, 0.1).unwrap();
        let g = 1.0 - 1.0 / (1.0 + (-1.0f64).exp());
        assert_abs_diff_eq!(g, 0.26894, epsilon = 1e-5);
        assert_abs_diff_eq!(w[0], 1.02689, epsilon = 1e-5);
        assert_abs_diff_eq!(c[0], 1.02689, epsilon = 1e-5);

        // saturated negative pair: loss ~ w.c
        let mut w = [2.0f64, 0.0];
        let mut c = [5.0f64, 0.0];
        let loss = sgns_update(&mut w, &mut c, false, 0.0).unwrap();
        let oracle = -(1.0 - 1.0 / (1.0 + (-10.0f64).exp())).ln();
        assert_abs_diff_eq!(loss, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(loss, 10.0, epsilon = 1e-4);

        assert!(sgns_update(&mut [f64::NAN], &mut [1.0], true, 0.1).is_err());
        assert!(sgns_update(&mut [1.0], &mut [1.0, 2.0], true, 0.1).is_err());
    }

    #[test]
    fn degenerate_single_token_corpus() {
        let corpus = ProjectedCorpus {
            lines: vec![vec!["a".to_string(); 5]; 3],
            source: CorpusSource::Text,
        };
        let cfg = SgnsConfig {
            dim: 8,
            window: 2,
            negatives: 3,
            epochs: 2,
            ..Default::default()
        };
        let (space, _) = train_skipgram(&corpus, &cfg).unwrap();
        assert_eq!(space.len(), 1);
    }

    #[test]
    fn empty_vocabulary_after_pruning() {
        let corpus = ProjectedCorpus {
            lines: vec![vec!["a".to_string(), "b".to_string()]],
            source: CorpusSource::Text,
        };
        let cfg = SgnsConfig {
            min_count: 5,
            dim: 4,
            ..Default::default()
        };
        assert!(matches!(train_skipgram(&corpus, &cfg), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn grid_enumeration() {
        let g = default_grid(&SgnsConfig::default());
        assert_eq!(g.len(), 81);
        assert_eq!((g[0].window, g[0].negatives, g[0].lr, g[0].epochs), (3, 5, 0.1, 1));
        assert_eq!((g[1].window, g[1].epochs), (3, 5));
        assert_eq!(
            (g[80].window, g[80].negatives, g[80].lr, g[80].epochs),
            (20, 100, 0.001, 10)
        );
    }

    fn small_corpus() -> ProjectedCorpus {
        let mut r = rng::seeded(4);
        let lines = (0..300)
            .map(|_| {
                let base = r.random_range(0..4) * 5;
                (0..6).map(|_| format!("w{}", base + r.random_range(0..5))).collect()
            })
            .collect();
        ProjectedCorpus {
            lines,
            source: CorpusSource::Text,
        }
    }

    #[test]
    fn loss_non_increasing_first_epochs() {
        let cfg = SgnsConfig {
            dim: 16,
            window: 3,
            negatives: 5,
            lr: 0.05,
            epochs: 3,
            seed: 3,
            ..Default::default()
        };
        let (_, stats) = train_skipgram(&small_corpus(), &cfg).unwrap();
        assert_eq!(stats.epoch_losses.len(), 3);
        for w in stats.epoch_losses.windows(2) {
            assert!(w[1] <= w[0], "losses {:?}", stats.epoch_losses);
        }
    }

    #[test]
    fn single_worker_bit_identical() {
        let cfg = SgnsConfig {
            dim: 12,
            window: 3,
            epochs: 2,
            ..Default::default()
        };
        let (a, _) = train_skipgram(&small_corpus(), &cfg).unwrap();
        let (b, _) = train_skipgram(&small_corpus(), &cfg).unwrap();
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn multi_worker_runs() {
        let cfg = SgnsConfig {
            dim: 12,
            window: 3,
            epochs: 2,
            workers: 4,
            ..Default::default()
        };
        let (s, stats) = train_skipgram(&small_corpus(), &cfg).unwrap();
        assert_eq!(s.len(), 20);
        assert!(stats.updates > 0);
        assert!(s.matrix().iter().all(|v| v.is_finite()));
    }

    proptest! {
        #[test]
        fn update_matches_finite_differences(
            w in proptest::collection::vec(-1.0f64..1.0, 5),
            c in proptest::collection::vec((0.1f64..1.0, any::<bool>()), 5),
            positive in any::<bool>(),
        ) {
            let c: Vec<f64> = c.into_iter().map(|(m, neg)| if neg { -m } else { m }).collect();
            let lr = 1e-3;
            let (mut w1, mut c1) = (w.clone(), c.clone());
            sgns_update(&mut w1, &mut c1, positive, lr).unwrap();
            let h = 1e-5;
            for k in 0..5 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let fd = (pair_loss(&wp, &c, positive) - pair_loss(&wm, &c, positive)) / (2.0 * h);
                let analytic = -(w1[k] - w[k]) / lr;
                let denom = fd.abs().max(analytic.abs());
                prop_assert!((fd - analytic).abs() / denom < 1e-6, "k={} fd={} an={}", k, fd, analytic);
            }
        }
    }
}
