//! Intrinsic evaluation of semantic spaces on word-pair similarity and
//! relatedness benchmarks, and grid-search model selection.

use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexproject::ProjectedCorpus;
use crate::sgns::{train_skipgram, SgnsConfig};
use crate::spaces::{cosine_slices, SemanticSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBenchmark {
    pub name: String,
    pairs: Vec<(String, String, f64)>,
}

impl SimilarityBenchmark {
    /// Words are lowercased; duplicate unordered pairs are rejected.
    pub fn new(name: impl Into<String>, pairs: Vec<(String, String, f64)>) -> Result<Self> {
        let name = name.into();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(pairs.len());
        for (a, b, score) in pairs {
            if !score.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name}: non-finite gold score for ({a}, {b})"
                )));
            }
            let (a, b) = (a.to_lowercase(), b.to_lowercase());
            let key = if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            if !seen.insert(key) {
                return Err(Error::InvalidArgument(format!("{name}: duplicate pair ({a}, {b})")));
            }
            out.push((a, b, score));
        }
        Ok(SimilarityBenchmark { name, pairs: out })
    }

    pub fn pairs(&self) -> &[(String, String, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Native layouts accepted by [`load_benchmark`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkFormat {
    /// `word1<TAB>word2<TAB>score`, optional header.
    Tsv,
    /// SimLex-999 release: tab-separated with a `SimLex999` score column.
    Simlex,
    /// WordSim-353 releases: tab- or comma-separated, third column is the score.
    Wordsim,
}

impl FromStr for BenchmarkFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(BenchmarkFormat::Tsv),
            "simlex" | "simlex999" | "simlex-999" => Ok(BenchmarkFormat::Simlex),
            "wordsim" | "ws353" | "wordsim353" => Ok(BenchmarkFormat::Wordsim),
            other => Err(format!("unknown benchmark format {other:?}")),
        }
    }
}

pub fn load_benchmark(path: &Path, format: BenchmarkFormat) -> Result<SimilarityBenchmark> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    let split = |l: &str| -> Vec<String> {
        let sep = if format == BenchmarkFormat::Wordsim && !l.contains('\t') {
            ','
        } else {
            '\t'
        };
        l.split(sep).map(|f| f.trim().to_string()).collect()
    };

    let mut score_col = 2;
    if let Some(&(_, first)) = lines.peek() {
        let fields = split(first);
        let is_header = fields.get(2).is_none_or(|f| f.parse::<f64>().is_err());
        if is_header {
            if format == BenchmarkFormat::Simlex {
                score_col = fields
                    .iter()
                    .position(|f| f.eq_ignore_ascii_case("SimLex999"))
                    .ok_or_else(|| Error::parse(path, 1, "SimLex-999 header lacks a SimLex999 column"))?;
            }
            lines.next();
        } else if format == BenchmarkFormat::Simlex {
            score_col = 3;
        }
    }

    let mut pairs = Vec::new();
    for (lineno, line) in lines {
        let fields = split(line);
        if fields.len() <= score_col.max(1) {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected at least {} columns", score_col + 1),
            ));
        }
        let score: f64 = fields[score_col]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("non-numeric score {:?}", fields[score_col])))?;
        pairs.push((fields[0].clone(), fields[1].clone(), score));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    SimilarityBenchmark::new(name, pairs)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant sequence"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicScore {
    pub rho: f64,
    pub coverage: f64,
    pub covered: usize,
    pub total: usize,
}

/// Spearman correlation between cosine and gold scores over the pairs whose
/// words are both in the space (and have non-zero vectors).
pub fn eval_space(s: &SemanticSpace, b: &SimilarityBenchmark) -> Result<IntrinsicScore> {
    if b.is_empty() {
        return Err(Error::EmptyInput(format!("benchmark {}", b.name)));
    }
    let mut model = Vec::with_capacity(b.len());
    let mut gold = Vec::with_capacity(b.len());
    for (w1, w2, g) in &b.pairs {
        let (Some(v1), Some(v2)) = (s.vector(w1), s.vector(w2)) else {
            continue;
        };
        if let Some(c) = cosine_slices(v1, v2) {
            model.push(c);
            gold.push(*g);
        }
    }
    if model.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "benchmark {}: only {} pair(s) covered by the space",
            b.name,
            model.len()
        )));
    }
    Ok(IntrinsicScore {
        rho: spearman(&model, &gold)?,
        coverage: model.len() as f64 / b.len() as f64,
        covered: model.len(),
        total: b.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub config: SgnsConfig,
    pub similarity: Option<IntrinsicScore>,
    pub relatedness: Option<IntrinsicScore>,
    /// Mean of the two correlations, absent when the config failed.
    pub average: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: SemanticSpace,
    pub best_index: usize,
    pub table: Vec<GridRow>,
}

/// Index of the highest score; the earliest index wins ties.
pub fn select_best(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(v) = *s {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Trains every config and keeps the space maximizing the unweighted mean
/// of the similarity and relatedness correlations. Configs whose coverage
/// on either benchmark falls below `min_coverage` are marked failed.
pub fn grid_search(
    corpus: &ProjectedCorpus,
    grid: &[SgnsConfig],
    similarity: &SimilarityBenchmark,
    relatedness: &SimilarityBenchmark,
    min_coverage: f64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("sgns grid".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, usize, SemanticSpace)> = None;
    for (index, cfg) in grid.iter().enumerate() {
        let outcome = train_skipgram(corpus, cfg).and_then(|(space, _)| {
            let sim = eval_space(&space, similarity)?;
            let rel = eval_space(&space, relatedness)?;
            Ok((space, sim, rel))
        });
        let row = match outcome {
            Ok((space, sim, rel)) => {
                let low = sim.coverage < min_coverage || rel.coverage < min_coverage;
                let average = (!low).then(|| (sim.rho + rel.rho) / 2.0);
                if let Some(avg) = average {
                    if best.as_ref().is_none_or(|(b, _, _)| avg > *b) {
                        best = Some((avg, index, space));
                    }
                }
                GridRow {
                    index,
                    config: cfg.clone(),
                    similarity: Some(sim),
                    relatedness: Some(rel),
                    average,
                    error: low.then(|| format!("coverage below {min_coverage}")),
                }
            }
            Err(e) => GridRow {
                index,
                config: cfg.clone(),
                similarity: None,
                relatedness: None,
                average: None,
                error: Some(e.to_string()),
            },
        };
        table.push(row);
    }
    let (_, best_index, best) = best.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "no grid config reached coverage {min_coverage} on both benchmarks"
        ))
    })?;
    Ok(GridResult {
        best,
        best_index,
        table,
    })
}
