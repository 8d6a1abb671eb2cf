//! Acceptance checks. Each criterion prints one PASS/FAIL line. Criteria
//! that need external corpora read their paths from environment variables
//! and report FAIL with the reason when they are missing; they do not fail
//! the test binary. All other criteria must pass.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use lexadu_core::analysis::{aggregate_runs, ensemble_predict, TrainerSpec};
use lexadu_core::classifiers::bilstm::{embedding_loss_and_grad, table_matches_space, PAD, UNK};
use lexadu_core::classifiers::lstm::{loss_and_grad, BatchShape};
use lexadu_core::classifiers::{train_bilstm, BiLstmParams, ClassifierConfig, EmbeddingTable, Prediction};
use lexadu_core::data::{load_dataset, split, undersample, DatasetFormat, Label, LabeledDataset, Sentence};
use lexadu_core::experiment::{run_manifest, run_seed, RunOptions};
use lexadu_core::intrinsic::{grid_search, load_benchmark, spearman, BenchmarkFormat};
use lexadu_core::lexproject::{
    parse_association_table, parse_semantic_network, project_associations, project_network, NetworkFormat,
    ProjectedCorpus,
};
use lexadu_core::rng;
use lexadu_core::sgns::{default_grid, pair_loss, sgns_update, train_skipgram, SgnsConfig};
use lexadu_core::spaces::{cosine, load_space, random_space, OovPolicy, SemanticSpace, SpaceFamily, SpaceMeta};

const SPEARMAN_TOL: f64 = 1e-12;
const SPEARMAN_BUDGET: Duration = Duration::from_secs(5);
const SGNS_GRAD_TOL: f64 = 1e-6;
const LSTM_GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const COMMUNITY_GAP: f64 = 0.3;
const COMMUNITY_BUDGET: Duration = Duration::from_secs(60);
const WEBIS_BALANCED: usize = 11_112;
const INTRINSIC_TARGETS: [(&str, f64, f64); 4] = [
    ("wordnet simlex", 0.5389, 0.05),
    ("wordnet wordsim-rel", 0.6719, 0.07),
    ("swow simlex", 0.5261, 0.05),
    ("swow wordsim-rel", 0.4541, 0.07),
];
const EXTRINSIC_TOL: f64 = 0.03;
const EXTRINSIC_RUNS: usize = 10;

type Outcome = Result<String, String>;

struct Ledger {
    failures: Vec<String>,
}

impl Ledger {
    /// `required` criteria fail the binary; conditional ones only print.
    fn record(&mut self, id: &str, required: bool, outcome: Outcome) {
        match outcome {
            Ok(msg) => println!("PASS {id}: {msg}"),
            Err(msg) => {
                println!("FAIL {id}: {msg}");
                if required {
                    self.failures.push(id.to_string());
                }
            }
        }
    }
}

fn env_path(var: &str) -> Result<PathBuf, String> {
    match std::env::var_os(var) {
        Some(p) if Path::new(&p).exists() => Ok(PathBuf::from(p)),
        Some(p) => Err(format!("{var}={} does not exist", Path::new(&p).display())),
        None => Err(format!("{var} not set; resource unavailable")),
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn within_budget(start: Instant, budget: Duration, msg: String) -> Outcome {
    let took = start.elapsed();
    if took > budget {
        Err(format!("{msg}, but took {took:.2?} (budget {budget:?})"))
    } else {
        Ok(format!("{msg} in {took:.2?}"))
    }
}

// ---- 1

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    // rank = 1 + #smaller + (#equal - 1) / 2
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn spearman_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(101);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let n = r.random_range(2..=20);
        // small integer support forces ties
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0..6) as f64 * 0.5).collect();
        let (rx, ry) = (oracle_ranks(&x), oracle_ranks(&y));
        let expected = oracle_pearson(&rx, &ry);
        let got = spearman(&x, &y);
        if !expected.is_finite() {
            if got.is_ok() && got.as_ref().is_ok_and(|v| v.is_finite()) {
                return Err(format!("constant input {x:?} / {y:?} gave {got:?}"));
            }
            continue;
        }
        let got = got.map_err(|e| format!("spearman failed on {x:?}: {e}"))?;
        worst = worst.max((got - expected).abs());
        checked += 1;
    }
    if worst > SPEARMAN_TOL {
        return Err(format!("max deviation {worst:e} exceeds {SPEARMAN_TOL:e}"));
    }
    within_budget(
        start,
        SPEARMAN_BUDGET,
        format!("100 sequences, max deviation {worst:e}"),
    )
}

// ---- 2

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-8)
}

fn sgns_gradient() -> Result<f64, String> {
    let mut r = rng::seeded(7);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let dim = r.random_range(2..=8);
        let w: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let positive = case % 2 == 0;
        // with lr = 1 the update is exactly the negative gradient
        let (mut w2, mut c2) = (w.clone(), c.clone());
        sgns_update(&mut w2, &mut c2, positive, 1.0).map_err(|e| e.to_string())?;
        for k in 0..dim {
            let grad_w = w[k] - w2[k];
            let grad_c = c[k] - c2[k];
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[k] += h;
            wm[k] -= h;
            let num_w = (pair_loss(&wp, &c, positive) - pair_loss(&wm, &c, positive)) / (2.0 * h);
            let (mut cp, mut cm) = (c.clone(), c.clone());
            cp[k] += h;
            cm[k] -= h;
            let num_c = (pair_loss(&w, &cp, positive) - pair_loss(&w, &cm, positive)) / (2.0 * h);
            worst = worst.max(rel_err(grad_w, num_w)).max(rel_err(grad_c, num_c));
        }
    }
    Ok(worst)
}

fn bilstm_gradient() -> Result<f64, String> {
    let mut r = rng::seeded(13);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let shape = BatchShape { batch: 3, steps: 4 };
    let (dim, units) = (3, 2);
    let mut p = BiLstmParams::init(dim, units, &mut r);
    p.w_out.mapv_inplace(|v| v * 3.0);
    let x = Array2::from_shape_fn((12, dim), |_| r.random_range(-1.0..1.0));
    let mask = [
        true, true, true, true, true, true, false, false, true, false, false, false,
    ];
    let targets = [1.0, 0.0, 1.0];
    let drop = Array2::from_shape_fn((3, 2 * units), |(b, k)| if (b + k) % 3 == 0 { 0.0 } else { 1.25 });
    let loss = |q: &BiLstmParams, xi: &Array2<f64>| {
        loss_and_grad(q, xi.view(), &mask, shape, &targets, Some(&drop)).map(|g| g.loss)
    };
    let g = loss_and_grad(&p, x.view(), &mask, shape, &targets, Some(&drop)).map_err(|e| e.to_string())?;
    for ti in 0..8 {
        for j in 0..p.tensors()[ti].len() {
            let mut plus = p.clone();
            plus.tensors_mut()[ti][j] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[ti][j] -= h;
            let num = (loss(&plus, &x).map_err(|e| e.to_string())? - loss(&minus, &x).map_err(|e| e.to_string())?)
                / (2.0 * h);
            worst = worst.max(rel_err(g.params.tensors()[ti][j], num));
        }
    }
    for row in 0..x.nrows() {
        for col in 0..dim {
            let mut xp = x.clone();
            xp[[row, col]] += h;
            let mut xm = x.clone();
            xm[[row, col]] -= h;
            let num =
                (loss(&p, &xp).map_err(|e| e.to_string())? - loss(&p, &xm).map_err(|e| e.to_string())?) / (2.0 * h);
            worst = worst.max(rel_err(g.input[[row, col]], num));
        }
    }

    // embedding rows, including a row shared across positions and UNK
    let words: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let space = SemanticSpace::new(
        words.clone(),
        (0..9).map(|_| r.random_range(-1.0f32..1.0)).collect(),
        3,
        SpaceMeta::new(SpaceFamily::Random, "grad"),
    )
    .map_err(|e| e.to_string())?;
    let vocab: BTreeSet<String> = words.into_iter().collect();
    let table = EmbeddingTable::build(&space, &vocab, OovPolicy::Unknown { seed: 4 });
    let eshape = BatchShape { batch: 2, steps: 3 };
    let ids = [2, 3, 2, UNK, 4, PAD];
    let et = [1.0, 0.0];
    let eloss = |m: &Array2<f64>| {
        embedding_loss_and_grad(&p, m, &ids, eshape, &et, None)
            .map(|g| g.0.loss)
            .map_err(|e| e.to_string())
    };
    let (_, rows) = embedding_loss_and_grad(&p, table.matrix(), &ids, eshape, &et, None).map_err(|e| e.to_string())?;
    for (row, gr) in rows {
        for k in 0..3 {
            let mut tp = table.matrix().clone();
            tp[[row, k]] += h;
            let mut tm = table.matrix().clone();
            tm[[row, k]] -= h;
            let num = (eloss(&tp)? - eloss(&tm)?) / (2.0 * h);
            worst = worst.max(rel_err(gr[k], num));
        }
    }
    Ok(worst)
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let s = sgns_gradient()?;
    let l = bilstm_gradient()?;
    if s >= SGNS_GRAD_TOL || l >= LSTM_GRAD_TOL {
        return Err(format!(
            "sgns rel err {s:e} (< {SGNS_GRAD_TOL:e}), bilstm rel err {l:e} (< {LSTM_GRAD_TOL:e})"
        ));
    }
    within_budget(
        start,
        GRAD_BUDGET,
        format!("sgns max rel err {s:e}, bilstm max rel err {l:e}"),
    )
}

// ---- 3

fn community_property() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(2024);
    let communities: [Vec<String>; 2] = [
        (0..50).map(|i| format!("a{i}")).collect(),
        (0..50).map(|i| format!("b{i}")).collect(),
    ];
    let lines: Vec<Vec<String>> = (0..10_000)
        .map(|i| {
            let c = &communities[i % 2];
            (0..8).map(|_| c[r.random_range(0..c.len())].clone()).collect()
        })
        .collect();
    let corpus = ProjectedCorpus {
        lines,
        source: lexadu_core::lexproject::CorpusSource::Text,
    };
    let cfg = SgnsConfig {
        dim: 32,
        window: 4,
        negatives: 5,
        lr: 0.025,
        epochs: 2,
        min_count: 1,
        seed: 5,
        workers: 1,
    };
    let (space, _) = train_skipgram(&corpus, &cfg).map_err(|e| e.to_string())?;
    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    let all: Vec<(usize, &String)> = communities
        .iter()
        .enumerate()
        .flat_map(|(c, ws)| ws.iter().map(move |w| (c, w)))
        .collect();
    for (i, (ci, wi)) in all.iter().enumerate() {
        for (cj, wj) in &all[i + 1..] {
            let v = cosine(&space, wi, wj).map_err(|e| e.to_string())?;
            let acc = if ci == cj { &mut intra } else { &mut inter };
            acc.0 += v;
            acc.1 += 1;
        }
    }
    let (mi, mo) = (intra.0 / intra.1 as f64, inter.0 / inter.1 as f64);
    let gap = mi - mo;
    if gap < COMMUNITY_GAP {
        return Err(format!("intra {mi:.3} - inter {mo:.3} = {gap:.3} < {COMMUNITY_GAP}"));
    }
    within_budget(
        start,
        COMMUNITY_BUDGET,
        format!("intra {mi:.3} - inter {mo:.3} = {gap:.3}"),
    )
}

// ---- 4

fn compare(kind: &str, got: &str, expected_file: &str) -> Result<(), String> {
    let expected = fs::read_to_string(fixture(expected_file)).map_err(|e| e.to_string())?;
    if got.as_bytes() != expected.as_bytes() {
        return Err(format!("{kind}: got {got:?}, expected {expected:?}"));
    }
    Ok(())
}

fn projection_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = [
        (
            "edge tsv",
            project_network(
                &parse_semantic_network(&fixture("network.tsv"), NetworkFormat::EdgeTsv).map_err(|e| e.to_string())?,
            ),
            "network_expected.txt",
        ),
        (
            "wordnet",
            project_network(
                &parse_semantic_network(&fixture("wordnet"), NetworkFormat::WordnetDb).map_err(|e| e.to_string())?,
            ),
            "wordnet_expected.txt",
        ),
        (
            "swow",
            project_associations(&parse_association_table(&fixture("swow.csv")).map_err(|e| e.to_string())?),
            "swow_expected.txt",
        ),
    ];
    for (kind, corpus, expected) in &cases {
        let out = dir.path().join(expected);
        corpus.write(&out).map_err(|e| e.to_string())?;
        compare(kind, &fs::read_to_string(&out).map_err(|e| e.to_string())?, expected)?;
    }
    Ok("edge tsv, wordnet and swow corpora byte-identical to expected files".into())
}

// ---- 5

fn toy_dataset(n: usize) -> LabeledDataset {
    let s = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                Sentence::new(
                    format!("s{i}"),
                    format!("we should ban this because w{}", i % 7),
                    Label::Argument,
                    "toy",
                )
            } else {
                Sentence::new(
                    format!("s{i}"),
                    format!("the meeting is on day d{}", i % 5),
                    Label::NonArgument,
                    "toy",
                )
            }
        })
        .collect();
    LabeledDataset::new("toy", s)
}

fn frozen_transfer() -> Outcome {
    let d = toy_dataset(60);
    let vocab: BTreeSet<String> = d.sentences.iter().flat_map(|s| s.tokens.iter().cloned()).collect();
    let space = Arc::new(random_space(&vocab, 6, 5).map_err(|e| e.to_string())?);
    let before = space.checksum();
    let splits = split(&d, 2).map_err(|e| e.to_string())?;
    for (i, base) in [ClassifierConfig::ukps_webis(), ClassifierConfig::arauc()]
        .into_iter()
        .enumerate()
    {
        let cfg = ClassifierConfig {
            epochs: 3,
            trainable_embeddings: false,
            seed: i as u64,
            ..base
        };
        let (model, _) = train_bilstm(&splits, space.clone(), &cfg).map_err(|e| e.to_string())?;
        if space.checksum() != before {
            return Err("space checksum changed during frozen training".into());
        }
        if !table_matches_space(&model.table, &space) {
            return Err("embedding table diverged from the space in frozen mode".into());
        }
    }
    Ok(format!(
        "space checksum {} and table bit-identical after both presets",
        &before[..12]
    ))
}

// ---- 6

fn ensemble_enumeration() -> Outcome {
    let mut r = rng::seeded(66);
    let ids: Vec<String> = (0..8).map(|p| format!("p{p}")).collect();
    // member m votes Argument on pattern p iff bit m of p is set
    let members: Vec<Vec<Prediction>> = (0..3)
        .map(|m| {
            let mut v: Vec<Prediction> = ids
                .iter()
                .enumerate()
                .map(|(p, id)| Prediction {
                    id: id.clone(),
                    label: Label::from_bool(p >> m & 1 == 1),
                    score: 0.5,
                })
                .collect();
            if m > 0 {
                v.shuffle(&mut r);
            }
            v
        })
        .collect();
    let mut draws: Vec<Option<Vec<f64>>> = vec![None, Some(vec![1.0, 1.0, 1.0]), Some(vec![2.0, 1.0, 1.0])];
    draws.extend((0..200).map(|_| Some((0..3).map(|_| r.random_range(0.0..1.0)).collect())));
    for w in &draws {
        let got = ensemble_predict(&members, w.as_deref()).map_err(|e| e.to_string())?;
        let weights = w.clone().unwrap_or(vec![1.0; 3]);
        let total: f64 = weights.iter().sum();
        for (p, pred) in got.iter().enumerate() {
            if pred.id != ids[p] {
                return Err(format!("output order broken at {p}"));
            }
            let pos: f64 = (0..3).filter(|m| p >> m & 1 == 1).map(|m| weights[m]).sum();
            let neg: f64 = (0..3).filter(|m| p >> m & 1 == 0).map(|m| weights[m]).sum();
            let expected = Label::from_bool(pos >= neg);
            if pred.label != expected || (pred.score - pos / total).abs() > 1e-12 {
                return Err(format!(
                    "pattern {p:03b} weights {weights:?}: got {pred:?}, expected {expected:?}"
                ));
            }
        }
    }
    Ok(format!(
        "8 vote patterns x {} weight draws match enumeration",
        draws.len()
    ))
}

// ---- 7

fn balancing_synthetic() -> Outcome {
    let mut r = rng::seeded(77);
    for trial in 0..20 {
        let n_pos = r.random_range(1..200);
        let n_neg = r.random_range(1..200);
        let s: Vec<Sentence> = (0..n_pos + n_neg)
            .map(|i| Sentence::new(format!("x{i}"), "w", Label::from_bool(i < n_pos), "syn"))
            .collect();
        let d = LabeledDataset::new("syn", s);
        let u = undersample(&d, trial).map_err(|e| e.to_string())?;
        let c = u.class_counts();
        let m = n_pos.min(n_neg);
        if c.get(Label::Argument) != m || c.get(Label::NonArgument) != m {
            return Err(format!("{n_pos}/{n_neg} gave {c:?}"));
        }
    }
    Ok("20 random imbalanced datasets balanced to the minority count".into())
}

fn balancing_webis() -> Outcome {
    let p = env_path("LEXADU_WEBIS")?;
    let d = load_dataset(&p, DatasetFormat::Tsv).map_err(|e| e.to_string())?;
    let u = undersample(&d, 0).map_err(|e| e.to_string())?;
    if u.len() != WEBIS_BALANCED {
        return Err(format!(
            "{} examples after undersampling, expected {WEBIS_BALANCED}",
            u.len()
        ));
    }
    Ok(format!("{WEBIS_BALANCED} examples"))
}

// ---- 8

fn intrinsic_reproduction() -> Outcome {
    let wordnet = env_path("LEXADU_WORDNET_DIR")?;
    let swow = env_path("LEXADU_SWOW_CSV")?;
    let sim = load_benchmark(&env_path("LEXADU_SIMLEX")?, BenchmarkFormat::Simlex).map_err(|e| e.to_string())?;
    let rel = load_benchmark(&env_path("LEXADU_WORDSIM_REL")?, BenchmarkFormat::Wordsim).map_err(|e| e.to_string())?;
    let corpora = [
        (
            "wordnet",
            project_network(&parse_semantic_network(&wordnet, NetworkFormat::WordnetDb).map_err(|e| e.to_string())?),
        ),
        (
            "swow",
            project_associations(&parse_association_table(&swow).map_err(|e| e.to_string())?),
        ),
    ];
    let grid = default_grid(&SgnsConfig::default());
    let mut got = Vec::new();
    for (name, corpus) in &corpora {
        let res = grid_search(corpus, &grid, &sim, &rel, 0.5).map_err(|e| e.to_string())?;
        let row = &res.table[res.best_index];
        let s = row.similarity.map(|x| x.rho).unwrap_or(f64::NAN);
        let r = row.relatedness.map(|x| x.rho).unwrap_or(f64::NAN);
        got.push((format!("{name} simlex"), s));
        got.push((format!("{name} wordsim-rel"), r));
    }
    let mut notes = Vec::new();
    let mut ok = true;
    for (label, target, tol) in INTRINSIC_TARGETS {
        let v = got.iter().find(|(l, _)| l == label).map(|x| x.1).unwrap_or(f64::NAN);
        ok &= (v - target).abs() <= tol;
        notes.push(format!("{label} {v:.4} (target {target} +/- {tol})"));
    }
    if ok {
        Ok(notes.join(", "))
    } else {
        Err(notes.join(", "))
    }
}

// ---- 9

fn extrinsic_reproduction() -> Outcome {
    let ukps = env_path("LEXADU_UKPS")?;
    let glove = env_path("LEXADU_GLOVE")?;
    let d = load_dataset(&ukps, DatasetFormat::Tsv).map_err(|e| e.to_string())?;
    let splits = split(&d, 0).map_err(|e| e.to_string())?;
    let glove = Arc::new(load_space(&glove).map_err(|e| e.to_string())?);
    let vocab: BTreeSet<String> = d.sentences.iter().flat_map(|s| s.tokens.iter().cloned()).collect();
    let rand_space = Arc::new(random_space(&vocab, glove.dim(), 0).map_err(|e| e.to_string())?);
    let cfg = ClassifierConfig::ukps_webis();
    let trainers = [
        (
            "random-space bilstm",
            TrainerSpec::BiLstm {
                space: rand_space,
                config: cfg.clone(),
            },
            0.72,
        ),
        (
            "frozen glove bilstm",
            TrainerSpec::BiLstm {
                space: glove,
                config: cfg,
            },
            0.74,
        ),
        ("linear", TrainerSpec::linear(), 0.72),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (label, spec, target) in &trainers {
        let reports = (0..EXTRINSIC_RUNS)
            .map(|r| spec.fit(&splits, run_seed(0, r)).map(|x| x.1))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let f1 = aggregate_runs(&reports).map_err(|e| e.to_string())?.mean.f1;
        ok &= (f1 - target).abs() <= EXTRINSIC_TOL;
        notes.push(format!("{label} F1 {f1:.4} (target {target} +/- {EXTRINSIC_TOL})"));
    }
    if ok {
        Ok(notes.join(", "))
    } else {
        Err(notes.join(", "))
    }
}

// ---- 10

const MANIFEST: &str = r#"
seed = 9
runs = 2

[[dataset]]
name = "alpha"
path = "alpha.tsv"
undersample = true

[[space]]
name = "rand"
kind = "random"
dim = 5

[[classifier]]
name = "svm"
kind = "linear"
epochs = 3

[[classifier]]
name = "lstm"
kind = "bilstm"
epochs = 2
batch_size = 8
seq_len = 6
lstm_units = 3

[[experiment]]
name = "svm"
dataset = "alpha"
space = "rand"
classifier = "svm"

[[experiment]]
name = "lstm"
dataset = "alpha"
space = "rand"
classifier = "lstm"

[[analysis.ensemble]]
name = "vote"
experiments = ["svm", "lstm"]
weighting = "majority"
"#;

fn manifest_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut text = String::new();
    for i in 0..80 {
        if i % 3 == 0 {
            text.push_str(&format!("a{i}\twe must act because of {}\targ\n", i % 4));
        } else {
            text.push_str(&format!("a{i}\tthe train left at {} today\tnon-arg\n", i % 6));
        }
    }
    fs::write(dir.path().join("alpha.tsv"), text).map_err(|e| e.to_string())?;
    let m = dir.path().join("m.toml");
    fs::write(&m, MANIFEST).map_err(|e| e.to_string())?;
    let run = |out: &str| -> Result<Vec<u8>, String> {
        let opts = RunOptions {
            output_dir: Some(dir.path().join(out)),
            seed: None,
        };
        let o = run_manifest(&m, &opts).map_err(|e| e.to_string())?;
        if !o.succeeded() {
            return Err(format!("run failures: {:?}", o.summary.failures));
        }
        fs::read(&o.summary_path).map_err(|e| e.to_string())
    };
    let first = run("a")?;
    let warm = run("a")?;
    let cold = run("b")?;
    if first != warm || first != cold {
        return Err("summary.json differs between reruns".into());
    }
    Ok(format!("warm and cold reruns byte-identical ({} bytes)", first.len()))
}

fn main() {
    let mut ledger = Ledger { failures: Vec::new() };
    ledger.record("1 spearman oracle", true, spearman_oracle());
    ledger.record("2 gradient checks", true, gradient_checks());
    ledger.record("3 sgns communities", true, community_property());
    ledger.record("4 projection fidelity", true, projection_fidelity());
    ledger.record("5 frozen transfer", true, frozen_transfer());
    ledger.record("6 ensemble enumeration", true, ensemble_enumeration());
    ledger.record("7a balancing synthetic", true, balancing_synthetic());
    ledger.record("7b balancing webis", false, balancing_webis());
    ledger.record("8 intrinsic reproduction", false, intrinsic_reproduction());
    ledger.record("9 extrinsic reproduction", false, extrinsic_reproduction());
    ledger.record("10 manifest determinism", true, manifest_determinism());
    if !ledger.failures.is_empty() {
        eprintln!("required criteria failed: {:?}", ledger.failures);
        std::process::exit(1);
    }
}
