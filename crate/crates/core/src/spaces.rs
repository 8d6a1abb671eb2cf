//! Semantic spaces: a vocabulary mapped onto rows of a dense matrix.
//!
//! Spaces are read and written in the word2vec text format: a header line
//! `|V| dim` followed by one `word v1 ... vd` line per word. Components are
//! serialized with six decimals. Provenance metadata travels in a JSON
//! sidecar next to the vector file (`<path>.meta.json`).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_DIM: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceFamily {
    Network,
    FeatureBased,
    Corpus,
    Random,
}

impl fmt::Display for SpaceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpaceFamily::Network => "network",
            SpaceFamily::FeatureBased => "feature_based",
            SpaceFamily::Corpus => "corpus",
            SpaceFamily::Random => "random",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceMeta {
    pub family: SpaceFamily,
    pub source: String,
    pub config_hash: Option<String>,
}

impl SpaceMeta {
    pub fn new(family: SpaceFamily, source: impl Into<String>) -> Self {
        SpaceMeta {
            family,
            source: source.into(),
            config_hash: None,
        }
    }
}

/// Immutable word-to-vector mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSpace {
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f32>,
    dim: usize,
    meta: SpaceMeta,
}

impl SemanticSpace {
    /// Builds a space from row-major `matrix` (`words.len() * dim` entries).
    pub fn new(words: Vec<String>, matrix: Vec<f32>, dim: usize, meta: SpaceMeta) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("space dimension must be positive".into()));
        }
        if matrix.len() != words.len() * dim {
            return Err(Error::LengthMismatch {
                left: matrix.len(),
                right: words.len() * dim,
            });
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite component in row for {:?}",
                words[pos / dim]
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate word {w:?}")));
            }
        }
        Ok(SemanticSpace {
            words,
            index,
            matrix,
            dim,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &SpaceMeta {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: SpaceMeta) {
        self.meta = meta;
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index_of(word).map(|i| self.row(i))
    }

    /// SHA-256 over words and the raw bit patterns of every component.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([0]);
        }
        for v in &self.matrix {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// The `k` most cosine-similar words to `word`, excluding itself.
    pub fn nearest(&self, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let q = self
            .vector(word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))?;
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| self.words[i] != word)
            .filter_map(|i| cosine_slices(q, self.row(i)).map(|c| (i, c)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, c)| (self.words[i].clone(), c))
            .collect())
    }
}

impl Vocabulary for SemanticSpace {
    fn contains_word(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// Cosine similarity of two equal-length vectors, `None` if either has zero norm.
pub fn cosine_slices(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine(s: &SemanticSpace, w1: &str, w2: &str) -> Result<f64> {
    let a = s.vector(w1).ok_or_else(|| Error::OutOfVocabulary(w1.to_string()))?;
    let b = s.vector(w2).ok_or_else(|| Error::OutOfVocabulary(w2.to_string()))?;
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroNorm(w1.to_string()));
    }
    if b.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroNorm(w2.to_string()));
    }
    Ok(cosine_slices(a, b).expect("norms checked"))
}

/// How tokens missing from a space are embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OovPolicy {
    /// Every OOV token maps to one shared vector drawn from `seed`.
    Unknown { seed: u64 },
    /// OOV tokens map to the zero vector (still unmasked).
    Zero,
}

impl Default for OovPolicy {
    fn default() -> Self {
        OovPolicy::Unknown { seed: 0 }
    }
}

/// Initialization bound used for random and unknown vectors.
pub fn init_bound(dim: usize) -> f32 {
    0.5 / dim as f32
}

pub fn unknown_vector(dim: usize, seed: u64) -> Vec<f32> {
    let b = init_bound(dim);
    let dist = Uniform::new_inclusive(-b, b).expect("valid bounds");
    let mut r = rng::seeded(rng::derive_seed(seed, 0x756e6b));
    (0..dim).map(|_| dist.sample(&mut r)).collect()
}

impl OovPolicy {
    pub fn vector(&self, dim: usize) -> Vec<f32> {
        match *self {
            OovPolicy::Unknown { seed } => unknown_vector(dim, seed),
            OovPolicy::Zero => vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEmbedding {
    /// `seq_len x dim`; padded rows are zero.
    pub rows: Array2<f64>,
    pub mask: Vec<bool>,
}

/// Truncates or zero-pads `tokens` to `seq_len` rows.
pub fn embed_sequence(s: &SemanticSpace, tokens: &[String], seq_len: usize, oov: OovPolicy) -> SequenceEmbedding {
    let dim = s.dim();
    let mut rows = Array2::zeros((seq_len, dim));
    let mut mask = vec![false; seq_len];
    let mut unknown: Option<Vec<f32>> = None;
    for (t, tok) in tokens.iter().take(seq_len).enumerate() {
        let v: &[f32] = match s.vector(tok) {
            Some(v) => v,
            None => unknown.get_or_insert_with(|| oov.vector(dim)),
        };
        for (dst, &src) in rows.row_mut(t).iter_mut().zip(v) {
            *dst = src as f64;
        }
        mask[t] = true;
    }
    SequenceEmbedding { rows, mask }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub fn save_space(s: &SemanticSpace, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", s.len(), s.dim()).map_err(io)?;
    for (i, word) in s.words.iter().enumerate() {
        w.write_all(word.as_bytes()).map_err(io)?;
        for v in s.row(i) {
            write!(w, " {v:.6}").map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    let meta = serde_json::to_string_pretty(&s.meta)?;
    let mp = meta_path(path);
    std::fs::write(&mp, meta + "\n").map_err(|e| Error::io(&mp, e))
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let n = it.next()?.parse().ok()?;
    let d = it.next()?.parse().ok()?;
    it.next().is_none().then_some((n, d))
}

/// Reads a word2vec text file. A headerless file (GloVe layout) is accepted,
/// with the dimension taken from the first row.
pub fn load_space(path: &Path) -> Result<SemanticSpace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate().peekable();

    let mut declared: Option<usize> = None;
    let mut dim: Option<usize> = None;
    if let Some((_, first)) = lines.peek() {
        let first = first
            .as_ref()
            .map_err(|e| Error::io(path, std::io::Error::new(e.kind(), e.to_string())))?;
        if let Some((n, d)) = parse_header(first.trim_end_matches('\r')) {
            if d == 0 {
                return Err(Error::parse(path, 1, "dimension must be positive"));
            }
            declared = Some(n);
            dim = Some(d);
            lines.next();
        }
    }

    let mut words = Vec::with_capacity(declared.unwrap_or(0));
    let mut matrix = Vec::with_capacity(declared.unwrap_or(0) * dim.unwrap_or(0));
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line");
        let start = matrix.len();
        for f in fields {
            let v: f32 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("non-numeric component {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, format!("non-finite component {f:?}")));
            }
            matrix.push(v);
        }
        let arity = matrix.len() - start;
        let d = *dim.get_or_insert(arity);
        if arity != d || d == 0 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {d} components for {word:?}, found {arity}"),
            ));
        }
        words.push(word.to_string());
    }

    if let Some(n) = declared {
        if n != words.len() {
            return Err(Error::parse(
                path,
                1,
                format!("header declares {n} words but {} rows were read", words.len()),
            ));
        }
    }
    let dim = dim.ok_or_else(|| Error::EmptyInput(path.display().to_string()))?;
    let mp = meta_path(path);
    let meta = if mp.exists() {
        let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        serde_json::from_str(&text)?
    } else {
        let source = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        SpaceMeta::new(SpaceFamily::Corpus, source)
    };
    SemanticSpace::new(words, matrix, dim, meta).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::parse(path, 0, m),
        other => other,
    })
}

/// Uniform random vectors in `[-0.5/dim, 0.5/dim]` over the sorted vocabulary.
pub fn random_space(vocab: &BTreeSet<String>, dim: usize, seed: u64) -> Result<SemanticSpace> {
    if vocab.is_empty() {
        return Err(Error::EmptyInput("random space vocabulary".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("space dimension must be positive".into()));
    }
    let b = init_bound(dim);
    let dist = Uniform::new_inclusive(-b, b).expect("valid bounds");
    let mut r = rng::seeded(seed);
    let matrix: Vec<f32> = (0..vocab.len() * dim).map(|_| dist.sample(&mut r)).collect();
    let mut meta = SpaceMeta::new(SpaceFamily::Random, "random");
    meta.config_hash = Some(format!("random:dim={dim}:seed={seed}"));
    SemanticSpace::new(vocab.iter().cloned().collect(), matrix, dim, meta)
}
