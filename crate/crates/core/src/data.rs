//! Labeled sentence corpora: loading, tokenization, class balancing, splits
//! and vocabulary statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Fraction of each dataset assigned to train, dev and test.
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.70, 0.10, 0.20);

/// Binary ADU label. `Argument` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Argument,
    NonArgument,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Argument, Label::NonArgument];

    pub fn as_token(self) -> &'static str {
        match self {
            Label::Argument => "arg",
            Label::NonArgument => "non-arg",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Argument
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Argument
        } else {
            Label::NonArgument
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Argument => Label::NonArgument,
            Label::NonArgument => Label::Argument,
        }
    }

    /// +1 for `Argument`, -1 otherwise.
    pub fn sign(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_token())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "arg" => Ok(Label::Argument),
            "non-arg" => Ok(Label::NonArgument),
            other => Err(format!("unknown label token {other:?} (expected arg or non-arg)")),
        }
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub label: Label,
    pub source: String,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label, source: impl Into<String>) -> Self {
        let text = text.into();
        Sentence {
            id: id.into(),
            tokens: tokenize(&text),
            text,
            label,
            source: source.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub argument: usize,
    pub non_argument: usize,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Argument => self.argument,
            Label::NonArgument => self.non_argument,
        }
    }

    pub fn total(&self) -> usize {
        self.argument + self.non_argument
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Tsv,
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(DatasetFormat::Tsv),
            "jsonl" => Ok(DatasetFormat::Jsonl),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: serde_json::Value,
    text: String,
    label: String,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        LabeledDataset {
            name: name.into(),
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for s in &self.sentences {
            match s.label {
                Label::Argument => c.argument += 1,
                Label::NonArgument => c.non_argument += 1,
            }
        }
        c
    }

    pub fn labels(&self) -> Vec<Label> {
        self.sentences.iter().map(|s| s.label).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.id.as_str()).collect()
    }

    /// Keeps sentences whose position is in `keep`, preserving dataset order.
    pub fn subset(&self, keep: &HashSet<usize>) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            sentences: self
                .sentences
                .iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(i))
                .map(|(_, s)| s.clone())
                .collect(),
        }
    }

    fn indices_by_label(&self) -> BTreeMap<Label, Vec<usize>> {
        let mut by: BTreeMap<Label, Vec<usize>> = Label::ALL.iter().map(|&l| (l, Vec::new())).collect();
        for (i, s) in self.sentences.iter().enumerate() {
            by.get_mut(&s.label).expect("both labels present").push(i);
        }
        by
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.len());
        for s in &self.sentences {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Dataset {
                    dataset: self.name.clone(),
                    message: format!("duplicate sentence id {:?}", s.id),
                });
            }
        }
        Ok(())
    }
}

/// Loads a labeled corpus. The dataset is named after the file stem.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LabeledDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut sentences = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id, text, label) = match format {
            DatasetFormat::Tsv => {
                let mut parts = line.splitn(2, '\t');
                let id = parts.next().unwrap_or_default();
                let rest = parts
                    .next()
                    .ok_or_else(|| Error::parse(path, lineno, "expected id<TAB>text<TAB>label"))?;
                let (text, label) = rest
                    .rsplit_once('\t')
                    .ok_or_else(|| Error::parse(path, lineno, "expected id<TAB>text<TAB>label"))?;
                (id.to_string(), text.to_string(), label.to_string())
            }
            DatasetFormat::Jsonl => {
                let rec: JsonRecord =
                    serde_json::from_str(line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
                let id = match rec.id {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Number(n) => n.to_string(),
                    other => return Err(Error::parse(path, lineno, format!("invalid id {other}"))),
                };
                (id, rec.text, rec.label)
            }
        };
        if id.trim().is_empty() {
            return Err(Error::parse(path, lineno, "empty id"));
        }
        if text.trim().is_empty() {
            return Err(Error::parse(path, lineno, "empty text"));
        }
        let label: Label = label.parse().map_err(|m: String| Error::parse(path, lineno, m))?;
        sentences.push(Sentence::new(id.trim(), text, label, name.clone()));
    }

    if sentences.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    let d = LabeledDataset::new(name, sentences);
    d.check_unique_ids()?;
    Ok(d)
}

/// Randomly reduces the majority class to the minority-class size.
///
/// Retained sentences keep their original order; the minority class is
/// untouched. Already-balanced datasets are returned unchanged.
pub fn undersample(d: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let counts = d.class_counts();
    if counts.argument == 0 || counts.non_argument == 0 {
        return Err(Error::Dataset {
            dataset: d.name.clone(),
            message: "undersampling requires both classes to be present".into(),
        });
    }
    let target = counts.argument.min(counts.non_argument);
    let by_label = d.indices_by_label();
    let mut rng = rng::seeded(seed);
    let mut keep = HashSet::with_capacity(2 * target);
    for idx in by_label.values() {
        if idx.len() == target {
            keep.extend(idx.iter().copied());
        } else {
            keep.extend(sample(&mut rng, idx.len(), target).into_iter().map(|j| idx[j]));
        }
    }
    Ok(d.subset(&keep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: LabeledDataset,
    pub dev: LabeledDataset,
    pub test: LabeledDataset,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSet {
    pub fn name(&self) -> &str {
        &self.train.name
    }
}

/// Split ratios in tenths, kept integral so rounding is exact.
const SPLIT_TENTHS: [usize; 3] = [7, 1, 2];

fn floor_ceil(n: usize, tenths: usize) -> [usize; 2] {
    [n * tenths / 10, (n * tenths).div_ceil(10)]
}

/// Per-class split sizes. Every cell, every split total and every class
/// total is the floor or ceiling of its exact share; split totals prefer
/// half-up rounding of the global ratio.
fn stratified_counts(counts: [usize; 2]) -> Option<[[usize; 3]; 2]> {
    let total = counts[0] + counts[1];
    let round = |tenths: usize| (total * tenths + 5) / 10;
    let fits = |n: usize, tenths: usize, v: usize| floor_ceil(n, tenths).contains(&v);
    let mut best: Option<(usize, [[usize; 3]; 2])> = None;
    for &t_train in floor_ceil(total, SPLIT_TENTHS[0]).iter().rev() {
        for &t_dev in floor_ceil(total, SPLIT_TENTHS[1]).iter().rev() {
            for &train0 in floor_ceil(counts[0], SPLIT_TENTHS[0]).iter().rev() {
                for &dev0 in floor_ceil(counts[0], SPLIT_TENTHS[1]).iter().rev() {
                    let (Some(train1), Some(dev1)) = (t_train.checked_sub(train0), t_dev.checked_sub(dev0)) else {
                        continue;
                    };
                    let cells = [[train0, dev0], [train1, dev1]];
                    let mut out = [[0; 3]; 2];
                    let mut ok = true;
                    for c in 0..2 {
                        let [tr, dv] = cells[c];
                        let Some(te) = counts[c].checked_sub(tr + dv) else {
                            ok = false;
                            break;
                        };
                        ok &= fits(counts[c], SPLIT_TENTHS[0], tr)
                            && fits(counts[c], SPLIT_TENTHS[1], dv)
                            && fits(counts[c], SPLIT_TENTHS[2], te);
                        out[c] = [tr, dv, te];
                    }
                    let t_test = total - t_train - t_dev;
                    ok &= fits(total, SPLIT_TENTHS[2], t_test);
                    if !ok {
                        continue;
                    }
                    let penalty = usize::from(t_train != round(SPLIT_TENTHS[0])) * 2
                        + usize::from(t_dev != round(SPLIT_TENTHS[1]));
                    if best.as_ref().is_none_or(|(p, _)| penalty < *p) {
                        best = Some((penalty, out));
                    }
                }
            }
        }
    }
    best.map(|(_, cells)| cells)
}

/// Seeded, label-stratified 70/10/20 partition.
///
/// Each split keeps the original dataset order of its sentences.
pub fn split(d: &LabeledDataset, seed: u64) -> Result<SplitSet> {
    let too_small = |msg: &str| Error::Dataset {
        dataset: d.name.clone(),
        message: msg.to_string(),
    };
    if d.len() < 10 {
        return Err(too_small("at least 10 sentences are required to split"));
    }
    d.check_unique_ids()?;
    let (r_train, r_dev, r_test) = SPLIT_RATIOS;
    let by_label = d.indices_by_label();
    let counts = [by_label[&Label::Argument].len(), by_label[&Label::NonArgument].len()];
    let cells = stratified_counts(counts).ok_or_else(|| too_small("no consistent stratified split sizes"))?;

    let mut rng = rng::seeded(seed);
    let mut parts: [HashSet<usize>; 3] = Default::default();
    for (c, idx) in by_label.values().enumerate() {
        let order = rng::shuffled_indices(idx.len(), &mut rng);
        let [n_train, n_dev, _] = cells[c];
        for (rank, &j) in order.iter().enumerate() {
            let bucket = if rank < n_train {
                0
            } else if rank < n_train + n_dev {
                1
            } else {
                2
            };
            parts[bucket].insert(idx[j]);
        }
    }
    if parts.iter().any(HashSet::is_empty) {
        return Err(too_small("dataset too small to populate train, dev and test"));
    }
    Ok(SplitSet {
        train: d.subset(&parts[0]),
        dev: d.subset(&parts[1]),
        test: d.subset(&parts[2]),
        ratios: (r_train, r_dev, r_test),
        seed,
    })
}

/// Membership test over a word vocabulary.
pub trait Vocabulary {
    fn contains_word(&self, word: &str) -> bool;
}

impl Vocabulary for HashSet<String> {
    fn contains_word(&self, word: &str) -> bool {
        self.contains(word)
    }
}

impl Vocabulary for BTreeSet<String> {
    fn contains_word(&self, word: &str) -> bool {
        self.contains(word)
    }
}

impl<V> Vocabulary for HashMap<String, V> {
    fn contains_word(&self, word: &str) -> bool {
        self.contains_key(word)
    }
}

impl<V> Vocabulary for BTreeMap<String, V> {
    fn contains_word(&self, word: &str) -> bool {
        self.contains_key(word)
    }
}

/// Fraction of token occurrences absent from `vocab`. Zero for a dataset
/// without tokens.
pub fn oov_rate<V: Vocabulary + ?Sized>(d: &LabeledDataset, vocab: &V) -> f64 {
    let mut total = 0usize;
    let mut missing = 0usize;
    for tok in d.sentences.iter().flat_map(|s| &s.tokens) {
        total += 1;
        if !vocab.contains_word(tok) {
            missing += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        missing as f64 / total as f64
    }
}

/// Token counts over `d` (pass the train split), dropping entries below
/// `min_count`.
pub fn build_vocab(d: &LabeledDataset, min_count: usize) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for tok in d.sentences.iter().flat_map(|s| &s.tokens) {
        *counts.entry(tok.clone()).or_default() += 1;
    }
    counts.retain(|_, &mut c| c >= min_count);
    counts
}
