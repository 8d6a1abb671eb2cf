//! ADU sentence classifiers: an n-gram linear SVM and a BiLSTM over a
//! transferred semantic space.

mod adam;
pub mod bilstm;
pub mod linear;
pub mod lstm;
pub mod metrics;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use bilstm::{train_bilstm, BiLstmModel, ClassifierConfig, EmbeddingTable};
pub use linear::{
    featurize_ngrams, top_features, train_linear, train_linear_select, LinearModel, TopFeatures, LAMBDA_GRID,
};
pub use lstm::{lstm_forward, BiLstmParams, LstmParams};
pub use metrics::{evaluate, ClassMetrics, EvalReport, Evaluation, Metrics, Mode};

use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};

/// One classified sentence. `score` is a sigmoid probability for the BiLSTM
/// and a signed margin for the linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub score: f64,
}

pub trait Predictor {
    fn predict(&self, d: &LabeledDataset) -> Vec<Prediction>;
}

impl Predictor for LinearModel {
    fn predict(&self, d: &LabeledDataset) -> Vec<Prediction> {
        LinearModel::predict(self, d)
    }
}

/// Scores predictions against `gold`, which must list the same ids in the
/// same order.
pub fn evaluate_predictions(pred: &[Prediction], gold: &LabeledDataset) -> Result<Evaluation> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    if let Some((p, s)) = pred.iter().zip(&gold.sentences).find(|(p, s)| p.id != s.id) {
        return Err(Error::IdMismatch(format!(
            "prediction {} where gold has {}",
            p.id, s.id
        )));
    }
    let labels: Vec<Label> = pred.iter().map(|p| p.label).collect();
    evaluate(&labels, &gold.labels())
}

const DUMP_HEADER: &str = "id\tgold\tpredicted\tscore";

/// Writes `id gold predicted score` rows.
pub fn write_prediction_dump(path: &Path, gold: &LabeledDataset, pred: &[Prediction]) -> Result<()> {
    evaluate_predictions(pred, gold)?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "{DUMP_HEADER}").map_err(io)?;
    for (p, s) in pred.iter().zip(&gold.sentences) {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            p.id,
            s.label.as_token(),
            p.label.as_token(),
            p.score
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub id: String,
    pub gold: Label,
    pub prediction: Prediction,
}

pub fn read_prediction_dump(path: &Path) -> Result<Vec<DumpRow>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || (i == 0 && line == DUMP_HEADER) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let label = |s: &str| s.parse::<Label>().map_err(|e| Error::parse(path, i + 1, e));
        let score: f64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad score {:?}", cols[3])))?;
        rows.push(DumpRow {
            id: cols[0].to_string(),
            gold: label(cols[1])?,
            prediction: Prediction {
                id: cols[0].to_string(),
                label: label(cols[2])?,
                score,
            },
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    Ok(rows)
}
