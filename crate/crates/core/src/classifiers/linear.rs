//! Linear SVM over binary unigram+bigram features, trained by stochastic
//! subgradient descent on the L2-regularized hinge loss.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::metrics::evaluate;
use super::Prediction;
use crate::data::{Label, LabeledDataset, SplitSet};
use crate::error::{Error, Result};
use crate::rng;

pub const LAMBDA_GRID: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

/// Unigrams and `_`-joined bigrams, each present once and scaled to unit L2 norm.
pub fn featurize_ngrams(tokens: &[String]) -> Vec<(String, f64)> {
    let mut feats: BTreeSet<String> = tokens.iter().cloned().collect();
    for w in tokens.windows(2) {
        feats.insert(format!("{}_{}", w[0], w[1]));
    }
    if feats.is_empty() {
        return Vec::new();
    }
    let v = 1.0 / (feats.len() as f64).sqrt();
    feats.into_iter().map(|f| (f, v)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: BTreeMap<String, f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl LinearModel {
    /// Signed margin; positive means `Argument`.
    pub fn score(&self, tokens: &[String]) -> f64 {
        featurize_ngrams(tokens)
            .iter()
            .filter_map(|(f, v)| self.weights.get(f).map(|w| w * v))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, d: &LabeledDataset) -> Vec<Prediction> {
        d.sentences
            .iter()
            .map(|s| {
                let score = self.score(&s.tokens);
                Prediction {
                    id: s.id.clone(),
                    label: Label::from_bool(score >= 0.0),
                    score,
                }
            })
            .collect()
    }
}

/// Trains with step size `1 / (1 + lambda * t)`; the bias is unregularized.
pub fn train_linear(train: &LabeledDataset, lambda: f64, epochs: usize, seed: u64) -> Result<LinearModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput(format!("train split of {}", train.name)));
    }
    let counts = train.class_counts();
    if counts.argument == 0 || counts.non_argument == 0 {
        return Err(Error::Dataset {
            dataset: train.name.clone(),
            message: "train split contains a single class".into(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let examples: Vec<(Vec<(usize, f64)>, f64)> = train
        .sentences
        .iter()
        .map(|s| {
            let x = featurize_ngrams(&s.tokens)
                .into_iter()
                .map(|(f, v)| {
                    let next = index.len();
                    let i = *index.entry(f.clone()).or_insert_with(|| {
                        names.push(f);
                        next
                    });
                    (i, v)
                })
                .collect();
            (x, s.label.sign())
        })
        .collect();

    // w = scale * v keeps the shrink step O(1)
    let mut v = vec![0.0f64; names.len()];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut t = 0u64;
    let mut r = rng::seeded(seed);
    for _ in 0..epochs {
        for i in rng::shuffled_indices(examples.len(), &mut r) {
            let (x, y) = &examples[i];
            let eta = 1.0 / (1.0 + lambda * t as f64);
            t += 1;
            let margin = y * (scale * x.iter().map(|&(j, xv)| v[j] * xv).sum::<f64>() + bias);
            scale *= 1.0 - eta * lambda;
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for &(j, xv) in x {
                    v[j] += step * xv;
                }
                bias += eta * y;
            }
        }
    }
    let weights = names
        .into_iter()
        .zip(v)
        .map(|(n, w)| (n, w * scale))
        .filter(|(_, w)| *w != 0.0)
        .collect();
    Ok(LinearModel { weights, bias, lambda })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub dev_f1: f64,
}

/// Trains one model per `lambdas` entry and keeps the best dev macro F1
/// (earliest entry on ties).
pub fn train_linear_select(
    splits: &SplitSet,
    lambdas: &[f64],
    epochs: usize,
    seed: u64,
) -> Result<(LinearModel, Vec<LambdaScore>)> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let gold = splits.dev.labels();
    let mut best: Option<(f64, LinearModel)> = None;
    let mut scores = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let m = train_linear(&splits.train, lambda, epochs, seed)?;
        let pred: Vec<Label> = m.predict(&splits.dev).iter().map(|p| p.label).collect();
        let f1 = evaluate(&pred, &gold)?.metrics.f1;
        scores.push(LambdaScore { lambda, dev_f1: f1 });
        if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            best = Some((f1, m));
        }
    }
    Ok((best.expect("non-empty grid").1, scores))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopFeatures {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

/// The `k` largest positive and `k` most negative weights, ties broken
/// lexicographically. `k` is clamped to the number of available features.
pub fn top_features(m: &LinearModel, k: usize) -> TopFeatures {
    let mut pos: Vec<(&String, f64)> = m
        .weights
        .iter()
        .filter(|(_, &w)| w > 0.0)
        .map(|(f, &w)| (f, w))
        .collect();
    let mut neg: Vec<(&String, f64)> = m
        .weights
        .iter()
        .filter(|(_, &w)| w < 0.0)
        .map(|(f, &w)| (f, w))
        .collect();
    pos.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(b.0)));
    neg.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(b.0)));
    TopFeatures {
        positive: pos.into_iter().take(k).map(|(f, _)| f.clone()).collect(),
        negative: neg.into_iter().take(k).map(|(f, _)| f.clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, Sentence};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn ngram_features() {
        let f = featurize_ngrams(&toks("we need safe"));
        let names: BTreeSet<&str> = f.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, BTreeSet::from(["we", "need", "safe", "we_need", "need_safe"]));
        let norm: f64 = f.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(featurize_ngrams(&toks("solo")).len(), 1);
        // repeated tokens are presence features
        assert_eq!(featurize_ngrams(&toks("a a")).len(), 2);
    }

    fn separable() -> LabeledDataset {
        let pos = [
            "we must ban it",
            "you should stop this",
            "they ought to pay",
            "ban it now",
            "stop must pay",
        ];
        let neg = [
            "the cat sat down",
            "a dog ran far",
            "sky was blue today",
            "cat ran today",
            "dog sat blue",
        ];
        let mut s = Vec::new();
        for (i, t) in pos.iter().enumerate() {
            s.push(Sentence::new(format!("p{i}"), *t, Label::Argument, "toy"));
        }
        for (i, t) in neg.iter().enumerate() {
            s.push(Sentence::new(format!("n{i}"), *t, Label::NonArgument, "toy"));
        }
        LabeledDataset::new("toy", s)
    }

    #[test]
    fn separable_training_accuracy() {
        let d = separable();
        let m = train_linear(&d, 1e-4, 20, 7).unwrap();
        let pred = m.predict(&d);
        assert!(pred.iter().zip(&d.sentences).all(|(p, s)| p.label == s.label));
        assert_eq!(train_linear(&d, 1e-4, 20, 7).unwrap(), m);
        assert!(m.weights.values().all(|w| w.is_finite()));
    }

    #[test]
    fn single_class_rejected() {
        let mut d = separable();
        d.sentences.retain(|s| s.label == Label::Argument);
        assert!(matches!(train_linear(&d, 1e-3, 1, 0), Err(Error::Dataset { .. })));
    }

    #[test]
    fn lambda_selection_uses_dev() {
        let mut s = Vec::new();
        for i in 0..40 {
            let (text, label) = if i % 2 == 0 {
                (format!("we should act {i}"), Label::Argument)
            } else {
                (format!("the report lists {i}"), Label::NonArgument)
            };
            s.push(Sentence::new(format!("s{i}"), text, label, "toy"));
        }
        let splits = split(&LabeledDataset::new("toy", s), 1).unwrap();
        let (m, scores) = train_linear_select(&splits, &LAMBDA_GRID, 5, 3).unwrap();
        assert_eq!(scores.len(), 4);
        let best = scores.iter().map(|s| s.dev_f1).fold(f64::MIN, f64::max);
        let first_best = scores.iter().find(|s| s.dev_f1 == best).unwrap();
        assert_eq!(m.lambda, first_best.lambda);
    }

    #[test]
    fn top_feature_examples() {
        let m = LinearModel {
            weights: BTreeMap::from([
                ("good".to_string(), 2.0),
                ("bad".to_string(), -1.5),
                ("the".to_string(), 0.1),
            ]),
            bias: 0.0,
            lambda: 1e-3,
        };
        let t = top_features(&m, 1);
        assert_eq!(t.positive, vec!["good"]);
        assert_eq!(t.negative, vec!["bad"]);
        let t = top_features(&m, 0);
        assert!(t.positive.is_empty() && t.negative.is_empty());
        let t = top_features(&m, 10);
        assert_eq!(t.positive, vec!["good", "the"]);

        let tie = LinearModel {
            weights: BTreeMap::from([("zeta".to_string(), 1.0), ("alpha".to_string(), 1.0)]),
            bias: 0.0,
            lambda: 1e-3,
        };
        assert_eq!(top_features(&tie, 1).positive, vec!["alpha"]);
    }
}
