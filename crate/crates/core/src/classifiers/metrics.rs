use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Frozen,
    Trainable,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Frozen => "frozen",
            Mode::Trainable => "trainable",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Test metrics of one run. `precision`, `recall` and `f1` are macro
/// averages over both classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_positive: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub const KEYS: [&'static str; 5] = ["precision", "recall", "f1", "f1_positive", "accuracy"];

    pub fn values(&self) -> [f64; 5] {
        [self.precision, self.recall, self.f1, self.f1_positive, self.accuracy]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Metrics {
            precision: v[0],
            recall: v[1],
            f1: v[2],
            f1_positive: v[3],
            accuracy: v[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub argument: ClassMetrics,
    pub non_argument: ClassMetrics,
}

fn class_metrics(pred: &[Label], gold: &[Label], class: Label) -> ClassMetrics {
    let tp = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| **p == class && **g == class)
        .count();
    let predicted = pred.iter().filter(|&&p| p == class).count();
    let support = gold.iter().filter(|&&g| g == class).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, support);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support,
    }
}

/// Per-class and macro-averaged precision, recall and F1. A class that is
/// never predicted has precision 0.
pub fn evaluate(pred: &[Label], gold: &[Label]) -> Result<Evaluation> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("predictions".into()));
    }
    let pos = class_metrics(pred, gold, Label::Argument);
    let neg = class_metrics(pred, gold, Label::NonArgument);
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(Evaluation {
        metrics: Metrics {
            precision: (pos.precision + neg.precision) / 2.0,
            recall: (pos.recall + neg.recall) / 2.0,
            f1: (pos.f1 + neg.f1) / 2.0,
            f1_positive: pos.f1,
            accuracy: correct as f64 / pred.len() as f64,
        },
        argument: pos,
        non_argument: neg,
    })
}

/// Metrics of one or more runs: means, with sample standard deviations when
/// more than one run contributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean: Metrics,
    pub std: Option<Metrics>,
    pub oov_rate: Option<f64>,
    pub mode: Option<Mode>,
    pub runs: usize,
}

impl EvalReport {
    pub fn single(metrics: Metrics, oov_rate: Option<f64>, mode: Option<Mode>) -> Self {
        EvalReport {
            mean: metrics,
            std: None,
            oov_rate,
            mode,
            runs: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Argument as A, NonArgument as N};

    #[test]
    fn perfect_predictions() {
        let g = [A, N, A, N];
        let e = evaluate(&g, &g).unwrap();
        assert_eq!((e.metrics.precision, e.metrics.recall, e.metrics.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_argument_on_balanced() {
        let g = [A, A, N, N];
        let e = evaluate(&[A; 4], &g).unwrap();
        assert!((e.argument.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(e.non_argument.f1, 0.0);
        assert_eq!(e.non_argument.precision, 0.0);
        assert!((e.metrics.f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(evaluate(&[A], &[A, N]).is_err());
        assert!(evaluate(&[], &[]).is_err());
    }

    fn labels() -> impl Strategy<Value = Vec<(bool, bool)>> {
        proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40)
    }

    proptest! {
        #[test]
        fn relabel_symmetry(v in labels()) {
            let p: Vec<Label> = v.iter().map(|x| Label::from_bool(x.0)).collect();
            let g: Vec<Label> = v.iter().map(|x| Label::from_bool(x.1)).collect();
            let pf: Vec<Label> = p.iter().map(|l| l.other()).collect();
            let gf: Vec<Label> = g.iter().map(|l| l.other()).collect();
            let a = evaluate(&p, &g).unwrap().metrics;
            let b = evaluate(&pf, &gf).unwrap().metrics;
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
        }

        #[test]
        fn f1_is_harmonic_mean(v in labels()) {
            let p: Vec<Label> = v.iter().map(|x| Label::from_bool(x.0)).collect();
            let g: Vec<Label> = v.iter().map(|x| Label::from_bool(x.1)).collect();
            let e = evaluate(&p, &g).unwrap();
            for c in [e.argument, e.non_argument] {
                let hm = if c.precision + c.recall == 0.0 { 0.0 } else { 2.0 * c.precision * c.recall / (c.precision + c.recall) };
                prop_assert!((c.f1 - hm).abs() < 1e-12);
            }
            prop_assert!(e.metrics.f1 <= e.argument.f1.max(e.non_argument.f1) + 1e-12);
            for m in e.metrics.values() {
                prop_assert!((0.0..=1.0).contains(&m));
            }
        }
    }
}
